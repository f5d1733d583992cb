//! Distributional fixed points, the Bethe functional, free-energy estimates,
//! the empirical cavity kernel, the interpolation family and zero-temperature
//! estimates.

mod interpolation;
mod optimize;
mod popdyn;

pub use interpolation::{
    interpolation_graph, interpolation_monotonicity_check, BinaryFactor, InterpolationConfig, InterpolationGraph,
    MonotonicityReport, StepDiff, TPoint,
};
pub use optimize::{
    brute_force_independence_number, brute_force_max_cut, brute_force_max_satisfied, independence_ratio_estimate,
    max_ksat_estimate, max_qcut_estimate, phi_curve, PhiConfig, PhiCurve, PhiPoint, ZeroTempEstimate,
};
pub use popdyn::{
    bethe_functional, evolve, popdyn_free_energy, population_dynamics, BetheEstimate, PopDynConfig, Population,
    DEFAULT_REJECTION_CAP,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{bethe_free_energy, bp_solve, Init};
use crate::decomp::Decomposition;
use crate::error::{Error, Result};
use crate::exact::Oracle;
use crate::graph::{sample_pairing_graph, Carved, FactorGraph};
use crate::kernel::Kernel;
use crate::model::Model;
use crate::numeric::{mean_stderr, substream};

/// Kernel of outgoing cavity messages, one row per part of `decomposition`
/// (a decomposition of the Boltzmann distribution of `g`) and one column per
/// cavity of `carved`. Rows are weighted by `ž`: the part's mass times the
/// inverse local normalizers of the removed variables and removed constraints,
/// evaluated with the standard messages of `g` given the part.
///
/// Returns `None` when there are no cavities.
pub fn cavity_kernel(g: &FactorGraph, decomposition: &Decomposition, carved: &Carved) -> Result<Option<Kernel>> {
    let oracle = Oracle::default();
    let (q, k, d) = (g.q(), g.k(), g.d());
    let mut targets = Vec::with_capacity(carved.cavities.len());
    for entry in &carved.cavities.entries {
        let v = carved.var_map[entry.var];
        // clones that were paired before the surgery
        let lost: Vec<usize> = entry.unpaired.iter().copied().filter(|&h| g.clone_partner(v, h).is_some()).collect();
        match lost.as_slice() {
            [] => continue,
            [h] => {
                let (a, j) = g.clone_partner(v, *h).expect("paired clone");
                targets.push(a * k + j);
            }
            _ => {
                let degree = d - entry.unpaired.len();
                return Err(Error::CavityDegree { var: v, degree, expected: degree + lost.len() - 1 });
            }
        }
    }
    if targets.is_empty() {
        return Ok(None);
    }
    let mut rows = Vec::with_capacity(decomposition.parts.len());
    let mut buf = vec![0.0; q];
    for (i, part) in decomposition.parts.iter().enumerate() {
        let event = decomposition.event(i);
        let msgs = oracle.standard_messages(g, Some(&event))?;
        let mut log_z = part.weight.ln();
        for &v in &carved.removed_vars {
            let mut acc = g.prior(v).to_vec();
            for &e in g.var_edges(v) {
                let (a, j) = (e / k, e % k);
                let ms: Vec<&[f64]> = (0..k).map(|i| msgs.v2f(a * k + i)).collect();
                g.constraint(a).weight.contract(j, &ms, &mut buf);
                for (x, y) in acc.iter_mut().zip(&buf) {
                    *x *= y;
                }
            }
            log_z -= log_positive(acc.iter().sum())?;
        }
        for &a in &carved.removed_extra {
            let ms: Vec<&[f64]> = (0..k).map(|j| msgs.v2f(a * k + j)).collect();
            log_z -= log_positive(g.constraint(a).weight.expectation(&ms))?;
        }
        let cells = targets.iter().map(|&e| msgs.v2f(e).to_vec()).collect();
        rows.push((log_z, cells));
    }
    let top = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let rows = rows.into_iter().map(|(lz, cells)| ((lz - top).exp(), cells)).collect();
    Kernel::new(q, targets.len(), rows).map(Some)
}

fn log_positive(x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x.ln())
    } else {
        Err(Error::ZeroWeight)
    }
}

/// How `ln Z / n` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Exhaustive enumeration on sampled graphs.
    Exact,
    /// Bethe free energy of a BP fixed point on sampled graphs.
    Bp,
    /// Population dynamics followed by the Bethe functional.
    Popdyn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeEnergyConfig {
    pub method: Method,
    pub n_list: Vec<usize>,
    pub graphs_per_n: usize,
    pub popdyn: PopDynConfig,
    pub samples: usize,
    pub bp_tol: f64,
    pub bp_max_iter: usize,
    pub bp_damping: f64,
}

impl Default for FreeEnergyConfig {
    fn default() -> Self {
        FreeEnergyConfig {
            method: Method::Exact,
            n_list: vec![8],
            graphs_per_n: 10,
            popdyn: PopDynConfig::default(),
            samples: 100_000,
            bp_tol: 1e-10,
            bp_max_iter: 1000,
            bp_damping: 0.0,
        }
    }
}

/// One `ln Z / n` estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeEnergyRecord {
    pub method: Method,
    /// Graph size; absent for population dynamics.
    pub n: Option<usize>,
    pub estimate: f64,
    pub stderr: f64,
    /// Graphs or Monte Carlo draws averaged.
    pub samples: usize,
    /// Graphs on which BP did not converge (BP only).
    pub unconverged: usize,
}

/// Free-energy estimates by the chosen method; graph `i` of size `n` is drawn
/// from its own seeded substream so records do not depend on thread count.
pub fn free_energy_report(model: &Model, cfg: &FreeEnergyConfig, seed: u64) -> Result<Vec<FreeEnergyRecord>> {
    if cfg.method == Method::Popdyn {
        let b = popdyn_free_energy(model, &cfg.popdyn, cfg.samples, seed)?;
        return Ok(vec![FreeEnergyRecord {
            method: Method::Popdyn,
            n: None,
            estimate: b.estimate,
            stderr: b.stderr,
            samples: b.draws,
            unconverged: 0,
        }]);
    }
    if cfg.graphs_per_n == 0 {
        return Err(Error::OutOfRange("graphs_per_n must be positive".into()));
    }
    let mut out = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let results: Vec<Result<(f64, bool)>> = (0..cfg.graphs_per_n)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, ((n as u64) << 32) | i as u64);
                let g = sample_pairing_graph(model, n, &mut rng)?;
                match cfg.method {
                    Method::Exact => Ok((Oracle::default().log_z(&g, None)? / n as f64, true)),
                    _ => {
                        let (msgs, rep) = bp_solve(&g, Init::Uniform, cfg.bp_damping, cfg.bp_tol, cfg.bp_max_iter)?;
                        Ok((bethe_free_energy(&g, &msgs)? / n as f64, rep.converged))
                    }
                }
            })
            .collect();
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let vals: Vec<f64> = results.iter().map(|r| r.0).collect();
        let (estimate, stderr) = mean_stderr(&vals);
        out.push(FreeEnergyRecord {
            method: cfg.method,
            n: Some(n),
            estimate,
            stderr,
            samples: vals.len(),
            unconverged: results.iter().filter(|r| !r.1).count(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bp::{bp_solve, Init};
    use crate::decomp::{decompose_measure, Theta};
    use crate::graph::{carve_cavities, sample_tree};
    use crate::numeric::rng_from_seed;

    #[test]
    fn no_cavities_is_none() {
        let m = Model::potts(2, 3, 0.5).unwrap();
        let g = sample_pairing_graph(&m, 4, &mut rng_from_seed(1)).unwrap();
        let carved = carve_cavities(&g, 0, 0, &mut rng_from_seed(2)).unwrap();
        let mu = Oracle::default().boltzmann(&g, None).unwrap();
        let dec = decompose_measure(&mu, Theta::Fixed(0), &mut rng_from_seed(3)).unwrap();
        assert_eq!(cavity_kernel(&g, &dec, &carved).unwrap(), None);
    }

    #[test]
    fn tree_single_removal() {
        let m = Model::kspin(2, 3, 0.8).unwrap();
        let mut rng = rng_from_seed(4);
        let g = sample_tree(&m, 5, &mut rng).unwrap();
        let carved = carve_cavities(&g, 1, 0, &mut rng).unwrap();
        let mu = Oracle::default().boltzmann(&g, None).unwrap();
        let dec = decompose_measure(&mu, Theta::Fixed(0), &mut rng).unwrap();
        let Some(kern) = cavity_kernel(&g, &dec, &carved).unwrap() else {
            // the removed variable was isolated
            assert!(carved.removed_adjacent.is_empty());
            return;
        };
        assert_eq!(kern.rows(), 1);
        let (msgs, rep) = bp_solve(&g, Init::Uniform, 0.0, 1e-14, 1000).unwrap();
        assert!(rep.converged);
        let g = &g;
        let lost = carved.cavities.entries.iter().flat_map(|e| {
            let v = carved.var_map[e.var];
            e.unpaired.iter().filter_map(move |&h| g.clone_partner(v, h))
        });
        for (c, (a, j)) in lost.enumerate() {
            for s in 0..2 {
                assert!((kern.cell(0, c)[s] - msgs.v2f(a * 2 + j)[s]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn beta_zero_cells_uniform() {
        let m = Model::potts(3, 3, 0.0).unwrap();
        let mut rng = rng_from_seed(5);
        let g = sample_pairing_graph(&m, 6, &mut rng).unwrap();
        let carved = carve_cavities(&g, 1, 1, &mut rng).unwrap();
        let mu = Oracle::default().boltzmann(&g, None).unwrap();
        let dec = decompose_measure(&mu, Theta::Fixed(1), &mut rng).unwrap();
        match cavity_kernel(&g, &dec, &carved) {
            Ok(Some(kern)) => {
                for r in 0..kern.rows() {
                    for c in 0..kern.cols() {
                        for s in 0..3 {
                            assert!((kern.cell(r, c)[s] - 1.0 / 3.0).abs() < 1e-12);
                        }
                    }
                }
            }
            Err(Error::CavityDegree { .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn beta_zero_all_methods() {
        let m = Model::kspin(2, 3, 0.0).unwrap();
        let expect = (1.0 - 1.5) * 2f64.ln();
        for method in [Method::Exact, Method::Bp, Method::Popdyn] {
            let cfg = FreeEnergyConfig {
                method,
                n_list: vec![4, 6],
                graphs_per_n: 3,
                popdyn: PopDynConfig { size: 20, sweeps: 2, damping: 0.0 },
                samples: 200,
                ..Default::default()
            };
            for r in free_energy_report(&m, &cfg, 7).unwrap() {
                assert!((r.estimate - expect).abs() < 1e-12, "{method:?} {}", r.estimate);
            }
        }
    }
}
