mod common;

use bethe_lab::graph::{carve_cavities, pairing_is_simple, sample_pairing, sample_pairing_graph, FactorGraph};
use bethe_lab::numeric::{rng_from_seed, substream};
use common::mixed_model;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn text_round_trip(seed in any::<u64>(), which in 0usize..6, n in 1usize..5) {
        let m = mixed_model(which, 3, 0.8);
        let n = n * m.k();
        let g = sample_pairing_graph(&m, n, &mut rng_from_seed(seed)).unwrap();
        let back = FactorGraph::from_text(&g.to_text()).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(FactorGraph::from_doc(&g.to_doc()).unwrap(), g);
    }

    #[test]
    fn degree_census(seed in any::<u64>(), which in 0usize..6, d in 3usize..6, n in 1usize..6) {
        let m = mixed_model(which, d, 0.5);
        let n = n * m.k();
        let g = sample_pairing_graph(&m, n, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(g.m() * m.k(), n * d);
        for v in 0..g.n() {
            prop_assert_eq!(g.degree(v), d);
        }
        for c in g.constraints() {
            prop_assert_eq!(c.vars.len(), m.k());
        }
        prop_assert!(g.cavities().is_empty());
    }

    #[test]
    fn carving_degree_floor(seed in any::<u64>(), which in 0usize..6, y in 0usize..4) {
        let m = mixed_model(which, 3, 0.5);
        let n = 4 * m.k();
        let mut rng = substream(seed, 0);
        let g = sample_pairing_graph(&m, n, &mut rng).unwrap();
        let y = y.min(g.m());
        let c = carve_cavities(&g, 0, y, &mut rng).unwrap();
        let floor = m.d().saturating_sub(y * m.k());
        for v in 0..c.graph.n() {
            prop_assert!(c.graph.degree(v) >= floor);
        }
        prop_assert_eq!(c.graph.m(), g.m() - y);
        prop_assert_eq!(c.graph.n(), g.n());
    }
}

#[test]
fn simplicity_rate_at_n_500() {
    let (n, d, k) = (500, 3, 2);
    let samples = 4000;
    let mut rng = rng_from_seed(20);
    let hits = (0..samples).filter(|_| pairing_is_simple(&sample_pairing(n, d, k, &mut rng).unwrap(), d, k)).count();
    let p_hat = hits as f64 / samples as f64;
    let p = (-(((d - 1) * (k - 1)) as f64) / 2.0 - ((d - 1) * (d - 1)) as f64 / 4.0).exp();
    let se = (p * (1.0 - p) / samples as f64).sqrt();
    assert!((p_hat - p).abs() <= 3.0 * se, "{p_hat} vs {p} (se {se})");
}
