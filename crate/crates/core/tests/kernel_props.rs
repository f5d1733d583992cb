use bethe_lab::decomp::discrete_cut_distance;
use bethe_lab::kernel::{cut_distance, join_f, CutMode, Kernel, TupleFunction};
use bethe_lab::measure::Measure;
use bethe_lab::numeric::{normalize, rng_from_seed};
use proptest::prelude::*;
use rand::Rng;

fn random_measure<R: Rng>(q: usize, n: usize, support: usize, rng: &mut R) -> Measure {
    let mut w: Vec<f64> = (0..support).map(|_| 0.1 + rng.gen::<f64>()).collect();
    normalize(&mut w);
    let configs = w.into_iter().map(|x| ((0..n).map(|_| rng.gen_range(0..q)).collect(), x)).collect();
    Measure::new(q, n, configs).unwrap()
}

/// The kernel with its rows listed twice at half weight and in reverse order.
fn split_rows(k: &Kernel) -> Kernel {
    let rows = (0..k.rows())
        .rev()
        .flat_map(|r| {
            let cells: Vec<Vec<f64>> = (0..k.cols()).map(|c| k.cell(r, c).to_vec()).collect();
            [(k.weight(r) / 2.0, cells.clone()), (k.weight(r) / 2.0, cells)]
        })
        .collect();
    Kernel::new(k.q(), k.cols(), rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn canonical_is_idempotent_and_free(seed in any::<u64>(), q in 2usize..4, rows in 1usize..4, cols in 1usize..4) {
        let k = Kernel::random(q, rows, cols, &mut rng_from_seed(seed));
        let split = split_rows(&k);
        let c = split.canonical();
        prop_assert_eq!(c.canonical(), c.clone());
        prop_assert_eq!(c.rows(), k.canonical().rows());
        let d = cut_distance(&split, &k, CutMode::Exact).unwrap();
        prop_assert!(d.upper.abs() < 1e-12);
    }

    #[test]
    fn cut_distance_is_a_metric(seed in any::<u64>(), q in 2usize..4, r in 1usize..4, c in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let a = Kernel::random(q, r, c, &mut rng);
        let b = Kernel::random(q, 1 + (r % 3), c, &mut rng);
        let e = Kernel::random(q, r, 1 + (c % 3), &mut rng);
        let ab = cut_distance(&a, &b, CutMode::Exact).unwrap();
        let ba = cut_distance(&b, &a, CutMode::Exact).unwrap();
        let ae = cut_distance(&a, &e, CutMode::Exact).unwrap();
        let be = cut_distance(&b, &e, CutMode::Exact).unwrap();
        for x in [ab, ba, ae, be] {
            prop_assert!(x.lower <= x.upper + 1e-12);
        }
        prop_assert!((ab.upper - ba.upper).abs() < 1e-9);
        prop_assert!(ae.upper <= ab.upper + be.upper + 1e-9);
        prop_assert!(cut_distance(&a, &a, CutMode::Exact).unwrap().upper == 0.0);
        let h = cut_distance(&a, &b, CutMode::Heuristic).unwrap();
        prop_assert!(h.lower <= h.upper + 1e-12);
        prop_assert!(h.upper + 1e-9 >= ab.lower);
    }

    #[test]
    fn join_f_reweights_only(seed in any::<u64>(), q in 2usize..4, rows in 1usize..5, cols in 1usize..4, arity in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let k = Kernel::random(q, rows, cols, &mut rng);
        let table: Vec<f64> = (0..q.pow(arity as u32)).map(|_| 0.05 + rng.gen::<f64>()).collect();
        let f = TupleFunction::new(q, arity, table).unwrap();
        let j = join_f(&k, &f, &mut rng).unwrap();
        prop_assert!((j.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert_eq!(j.rows(), k.rows());
        for r in 0..k.rows() {
            for c in 0..k.cols() {
                prop_assert_eq!(j.cell(r, c), k.cell(r, c));
            }
        }
        let id = join_f(&k, &TupleFunction::constant(q, arity), &mut rng).unwrap();
        prop_assert_eq!(id.weights(), k.weights());
    }

    #[test]
    fn embedding_is_contractive(seed in any::<u64>(), q in 2usize..3, n in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let mu = random_measure(q, n, 3, &mut rng);
        let nu = random_measure(q, n, 3, &mut rng);
        let kd = cut_distance(&Kernel::from_measure(&mu).unwrap(), &Kernel::from_measure(&nu).unwrap(), CutMode::Exact).unwrap();
        let md = discrete_cut_distance(&mu, &nu, CutMode::Exact).unwrap();
        prop_assert!(kd.lower <= md.upper + 1e-9, "{:?} vs {:?}", kd, md);
    }
}
