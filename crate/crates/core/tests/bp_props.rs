mod common;

use bethe_lab::bp::{bethe_free_energy, bp_residual, bp_solve, bp_step, marginal_from_messages, Init, MessageSet};
use bethe_lab::exact::Oracle;
use bethe_lab::graph::{sample_pairing_graph, sample_tree};
use bethe_lab::model::Model;
use bethe_lab::numeric::{rng_from_seed, substream};
use common::{close, mixed_model};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn all_normalized(g: &bethe_lab::graph::FactorGraph, m: &MessageSet) -> bool {
    (0..g.num_edges()).all(|e| {
        (m.v2f(e).iter().sum::<f64>() - 1.0).abs() < 1e-12 && (m.f2v(e).iter().sum::<f64>() - 1.0).abs() < 1e-12
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn step_keeps_messages_normalized(seed in any::<u64>(), which in 0usize..6, beta in 0.0f64..3.0) {
        let m = mixed_model(which, 3, beta);
        let mut rng = substream(seed, 0);
        let g = sample_pairing_graph(&m, 2 * m.k(), &mut rng).unwrap();
        let msgs = MessageSet::random(&g, &mut rng);
        let next = bp_step(&g, &msgs).unwrap();
        prop_assert!(all_normalized(&g, &next));
    }

    #[test]
    fn exact_on_trees(seed in any::<u64>(), which in 0usize..6, constraints in 1usize..5, beta in 0.0f64..2.5) {
        let m = mixed_model(which, 3, beta);
        let g = sample_tree(&m, constraints, &mut rng_from_seed(seed)).unwrap();
        let (msgs, rep) = bp_solve(&g, Init::Uniform, 0.0, 1e-13, 200).unwrap();
        prop_assert!(rep.converged && rep.residual < 1e-12);
        let o = Oracle::default();
        prop_assert!((bethe_free_energy(&g, &msgs).unwrap() - o.log_z(&g, None).unwrap()).abs() < 1e-9);
        for v in 0..g.n() {
            let bp = marginal_from_messages(&g, v, &msgs).unwrap();
            prop_assert!(close(&bp, &o.marginal(&g, v, None).unwrap(), 1e-9));
        }
    }

    #[test]
    fn potts_colour_equivariance(seed in any::<u64>(), q in 2usize..5, beta in 0.1f64..3.0) {
        let m = Model::potts(q, 3, beta).unwrap();
        let mut rng = substream(seed, 0);
        let g = sample_pairing_graph(&m, 4, &mut rng).unwrap();
        let msgs = MessageSet::random(&g, &mut rng);
        let mut perm: Vec<usize> = (0..q).collect();
        perm.shuffle(&mut rng);
        let a = bp_step(&g, &msgs.permute_spins(&perm)).unwrap();
        let b = bp_step(&g, &msgs).unwrap().permute_spins(&perm);
        prop_assert!(bp_residual(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn damping_keeps_fixed_points(seed in any::<u64>(), which in 0usize..6, damping in 0.05f64..0.95) {
        let m = mixed_model(which, 3, 1.0);
        let g = sample_tree(&m, 4, &mut rng_from_seed(seed)).unwrap();
        let (fixed, _) = bp_solve(&g, Init::Uniform, 0.0, 1e-14, 500).unwrap();
        let (again, rep) = bp_solve(&g, Init::Given(fixed.clone()), damping, 1e-12, 1).unwrap();
        prop_assert!(rep.converged);
        prop_assert!(bp_residual(&fixed, &again).unwrap() < 1e-12);
        // and the damped iteration reaches the same point from scratch
        let (damped, rep) = bp_solve(&g, Init::Uniform, damping, 1e-13, 5000).unwrap();
        prop_assert!(rep.converged);
        prop_assert!(bp_residual(&fixed, &damped).unwrap() < 1e-9);
    }
}
