mod common;

use bethe_lab::exact::{Event, Oracle};
use bethe_lab::graph::{sample_pairing_graph, Constraint, FactorGraph};
use bethe_lab::numeric::{rng_from_seed, LogSumExp};
use common::{close, mixed_model};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn small_graph(seed: u64, which: usize, beta: f64) -> FactorGraph {
    let m = mixed_model(which, 3, beta);
    let n = 6;
    sample_pairing_graph(&m, n, &mut rng_from_seed(seed)).unwrap()
}

fn relabel(g: &FactorGraph, perm: &[usize]) -> FactorGraph {
    let mut priors = vec![Vec::new(); g.n()];
    for v in 0..g.n() {
        priors[perm[v]] = g.prior(v).to_vec();
    }
    let cs = g
        .constraints()
        .iter()
        .map(|c| Constraint { vars: c.vars.iter().map(|&v| perm[v]).collect(), clones: c.clones.clone(), weight: c.weight.clone() })
        .collect();
    FactorGraph::from_parts(g.q(), g.k(), g.d(), priors, cs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn boltzmann_is_normalized(seed in any::<u64>(), which in 0usize..6, beta in 0.0f64..3.0) {
        let g = small_graph(seed, which, beta);
        let o = Oracle::default();
        let lz = o.log_z(&g, None).unwrap();
        let mut acc = LogSumExp::new();
        o.visit(&g, None, |_, lw| acc.add(lw)).unwrap();
        prop_assert!((acc.value().unwrap() - lz).abs() < 1e-12);
        let mu = o.boltzmann(&g, None).unwrap();
        prop_assert!((mu.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn standard_message_is_a_deletion_marginal(seed in any::<u64>(), which in 0usize..6, beta in 0.1f64..2.0) {
        let g = small_graph(seed, which, beta);
        let o = Oracle::default();
        let a = (seed as usize) % g.m();
        let v = g.constraint(a).vars[0];
        let msg = o.standard_message_v_to_a(&g, v, a, None).unwrap();
        let ga = g.remove_constraints(&[a]);
        let marg = o.marginal(&ga, v, None).unwrap();
        prop_assert!(close(&msg, &marg, 1e-12), "{:?} vs {:?}", msg, marg);
    }

    #[test]
    fn conditioning_consistency(seed in any::<u64>(), which in 0usize..6, pin in 0usize..3) {
        let g = small_graph(seed, which, 1.0);
        let o = Oracle::default();
        let q = g.q();
        let ev = Event::Subcube(vec![(g.n() - 1, pin % q)]);
        if o.log_partition_function(&g, Some(&ev)).unwrap().is_none() {
            return Ok(());
        }
        let (v, w) = (0, 1);
        let m = o.marginal(&g, v, Some(&ev)).unwrap();
        let pm = o.pair_marginal(&g, v, w, Some(&ev)).unwrap();
        let summed: Vec<f64> = (0..q).map(|s| (0..q).map(|t| pm[s * q + t]).sum()).collect();
        prop_assert!(close(&m, &summed, 1e-12));
    }

    #[test]
    fn relabeling_keeps_log_z(seed in any::<u64>(), which in 0usize..6, beta in 0.0f64..3.0) {
        let g = small_graph(seed, which, beta);
        let mut perm: Vec<usize> = (0..g.n()).collect();
        perm.shuffle(&mut rng_from_seed(seed ^ 1));
        let h = relabel(&g, &perm);
        let o = Oracle::default();
        prop_assert!((o.log_z(&g, None).unwrap() - o.log_z(&h, None).unwrap()).abs() < 1e-12);
    }
}
