mod common;

use bethe_lab::decomp::{decompose_measure, discrete_cut_distance, epsilon_symmetry, CutMode, Theta};
use bethe_lab::exact::Oracle;
use bethe_lab::graph::sample_pairing_graph;
use bethe_lab::measure::Measure;
use bethe_lab::numeric::{normalize, rng_from_seed, substream, tv};
use common::mixed_model;
use proptest::prelude::*;
use rand::Rng;

fn random_measure<R: Rng>(q: usize, n: usize, support: usize, rng: &mut R) -> Measure {
    let mut configs: Vec<(Vec<usize>, f64)> =
        (0..support).map(|_| ((0..n).map(|_| rng.gen_range(0..q)).collect(), 0.1 + rng.gen::<f64>())).collect();
    let mut w: Vec<f64> = configs.iter().map(|c| c.1).collect();
    normalize(&mut w);
    for (c, x) in configs.iter_mut().zip(w) {
        c.1 = x;
    }
    Measure::new(q, n, configs).unwrap()
}

fn random_marginals<R: Rng>(q: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut p: Vec<f64> = (0..q).map(|_| rng.gen::<f64>() + 0.01).collect();
            normalize(&mut p);
            p
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn decomposition_recombines(seed in any::<u64>(), which in 0usize..6, theta in 0usize..4) {
        let m = mixed_model(which, 3, 1.2);
        let mut rng = substream(seed, 0);
        let g = sample_pairing_graph(&m, 6, &mut rng).unwrap();
        let mu = Oracle::default().boltzmann(&g, None).unwrap();
        let dec = decompose_measure(&mu, Theta::Fixed(theta), &mut rng).unwrap();
        prop_assert!((dec.total_weight() + dec.residual_weight - 1.0).abs() < 1e-10);
        let conds: Vec<Measure> = (0..dec.parts.len()).map(|i| dec.conditional(&mu, i).unwrap()).collect();
        let parts: Vec<(f64, &Measure)> = dec.parts.iter().zip(&conds).map(|(p, c)| (p.weight, c)).collect();
        let back = Measure::mixture(&parts).unwrap();
        prop_assert!(back.approx_eq(&mu, 1e-10));
    }

    #[test]
    fn product_measures_are_symmetric(seed in any::<u64>(), q in 2usize..4, n in 2usize..6, ell in 2usize..4) {
        let mut rng = rng_from_seed(seed);
        let mu = Measure::product(q, &random_marginals(q, n, &mut rng)).unwrap();
        let r = epsilon_symmetry(&mu, ell, 100, &mut rng).unwrap();
        prop_assert!(r.estimate.abs() < 1e-12, "{}", r.estimate);
    }

    #[test]
    fn discrete_cut_distance_axioms(seed in any::<u64>(), q in 2usize..4, n in 1usize..4) {
        let mut rng = rng_from_seed(seed);
        let mu = random_measure(q, n, 3, &mut rng);
        let nu = random_measure(q, n, 3, &mut rng);
        let ab = discrete_cut_distance(&mu, &nu, CutMode::Exact).unwrap();
        let ba = discrete_cut_distance(&nu, &mu, CutMode::Exact).unwrap();
        prop_assert!(ab.lower <= ab.upper + 1e-12);
        prop_assert!((ab.lower - ba.lower).abs() < 1e-9 && (ab.upper - ba.upper).abs() < 1e-9);
        let same = discrete_cut_distance(&mu, &mu, CutMode::Exact).unwrap();
        prop_assert!(same.upper.abs() < 1e-12);
        let h = discrete_cut_distance(&mu, &nu, CutMode::Heuristic).unwrap();
        prop_assert!(h.lower <= h.upper + 1e-12);
        // marginal bound: Σ_v ‖μ_v − ν_v‖ / n ≤ 2|Ω| · upper
        let lhs: f64 = (0..n).map(|v| tv(&mu.marginal(v), &nu.marginal(v))).sum::<f64>() / n as f64;
        prop_assert!(lhs <= 2.0 * q as f64 * ab.upper + 1e-9);
        prop_assert!(lhs <= 2.0 * q as f64 * h.upper + 1e-9);
        if ab.upper < 1e-12 {
            prop_assert!(mu.approx_eq(&nu, 1e-9));
        }
    }
}
