use bethe_lab::kernel::Kernel;
use bethe_lab::model::{pos_values, Model};
use bethe_lab::numeric::rng_from_seed;
use proptest::prelude::*;

/// `E_x ∏_h κ(s_h, x)(σ_h)` for rows `s` and spins `sig`.
fn f_table(k: &Kernel, s: &[usize], sig: &[usize]) -> f64 {
    (0..k.cols()).map(|x| s.iter().zip(sig).map(|(&r, &o)| k.cell(r, x)[o]).product::<f64>()).sum::<f64>() / k.cols() as f64
}

fn tuples(base: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out.into_iter().flat_map(|t| (0..base).map(move |b| [t.clone(), vec![b]].concat())).collect();
    }
    out
}

/// For `ψ = 1 − c·1{σ₁ = σ₂ ∈ S}` the POS gap equals
/// `c^ℓ Σ_{σ ∈ S^ℓ} E_s (F_μ(σ,s) − F_μ′(σ,s))²`.
fn sum_of_squares(a: &Kernel, b: &Kernel, c: f64, spins: &[usize], ell: usize) -> f64 {
    let mut total = 0.0;
    for s in tuples(a.rows(), ell) {
        let w: f64 = s.iter().map(|&r| a.weight(r)).product();
        for idx in tuples(spins.len(), ell) {
            let sig: Vec<usize> = idx.iter().map(|&i| spins[i]).collect();
            let diff = f_table(a, &s, &sig) - f_table(b, &s, &sig);
            total += w * diff * diff;
        }
    }
    c.powi(ell as i32) * total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_tables_in_unit_interval(seed in any::<u64>(), beta in 0.0f64..4.0, which in 0usize..4) {
        let m = match which {
            0 => Model::kspin(2, 3, beta),
            1 => Model::kspin(3, 3, beta),
            2 => Model::potts(3, 3, beta),
            _ => Model::ksat(3, 3, beta),
        }.unwrap();
        let mut rng = rng_from_seed(seed);
        for _ in 0..20 {
            let w = m.sample_weight_function(&mut rng);
            prop_assert!(w.table().iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    #[test]
    fn hardcore_table_is_zero_one(seed in any::<u64>(), lambda in 0.1f64..10.0) {
        let m = Model::hardcore(3, lambda).unwrap();
        let w = m.sample_weight_function(&mut rng_from_seed(seed));
        prop_assert_eq!(w.table(), &[1.0, 1.0, 1.0, 0.0][..]);
    }

    #[test]
    fn pos_vanishes_on_the_diagonal(seed in any::<u64>(), which in 0usize..6, rows in 1usize..4, cols in 1usize..4) {
        let m = match which {
            0 => Model::kspin(2, 3, 1.0),
            1 => Model::kspin(3, 3, 0.7),
            2 => Model::potts(3, 3, 1.3),
            3 => Model::ksat(3, 3, 2.0),
            4 => Model::hardcore(3, 2.0),
            _ => Model::kspin(4, 3, 0.5),
        }.unwrap();
        let mut rng = rng_from_seed(seed);
        let mu = Kernel::random(m.q(), rows, cols, &mut rng);
        let quad = m.psi_quadrature(4, &mut rng);
        for v in pos_values(&m, &quad, &mu, &mu, 6).unwrap() {
            prop_assert!(v.abs() < 1e-12, "{}", v);
        }
    }

    #[test]
    fn potts_pos_is_a_sum_of_squares(seed in any::<u64>(), q in 2usize..4, beta in 0.1f64..3.0, rows in 1usize..3, cols in 1usize..3) {
        let m = Model::potts(q, 3, beta).unwrap();
        let mut rng = rng_from_seed(seed);
        let (a, b) = Kernel::random_pair(q, rows, cols, &mut rng);
        let quad = m.psi_quadrature(1, &mut rng);
        let vals = pos_values(&m, &quad, &a, &b, 3).unwrap();
        let c = 1.0 - (-beta).exp();
        let spins: Vec<usize> = (0..q).collect();
        for (l, v) in vals.iter().enumerate() {
            let direct = sum_of_squares(&a, &b, c, &spins, l + 1);
            prop_assert!((v - direct).abs() < 1e-10, "ℓ={} {} vs {}", l + 1, v, direct);
        }
    }

    #[test]
    fn hardcore_pos_is_a_sum_of_squares(seed in any::<u64>(), lambda in 0.1f64..5.0, rows in 1usize..3, cols in 1usize..3) {
        let m = Model::hardcore(3, lambda).unwrap();
        let mut rng = rng_from_seed(seed);
        let (a, b) = Kernel::random_pair(2, rows, cols, &mut rng);
        let quad = m.psi_quadrature(1, &mut rng);
        let vals = pos_values(&m, &quad, &a, &b, 3).unwrap();
        for (l, v) in vals.iter().enumerate() {
            let direct = sum_of_squares(&a, &b, 1.0, &[1], l + 1);
            prop_assert!((v - direct).abs() < 1e-10, "ℓ={} {} vs {}", l + 1, v, direct);
        }
    }
}
