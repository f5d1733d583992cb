//! Zero-temperature estimates from finite differences of the replica-symmetric
//! free energy, and exhaustive oracles to compare them with.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::model::Model;
use crate::numeric::{checked_pow, tuple_decode};

use super::popdyn::{popdyn_free_energy, PopDynConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiConfig {
    pub popdyn: PopDynConfig,
    pub samples: usize,
    /// Largest change between the last two differences counted as stabilized.
    pub stabilization_tol: f64,
}

impl Default for PhiConfig {
    fn default() -> Self {
        PhiConfig { popdyn: PopDynConfig::default(), samples: 100_000, stabilization_tol: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiPoint {
    pub param: f64,
    pub phi: f64,
    pub stderr: f64,
}

/// `Φ` against an inverse temperature or fugacity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiCurve {
    pub points: Vec<PhiPoint>,
}

impl PhiCurve {
    pub fn at(&self, param: f64) -> Option<&PhiPoint> {
        self.points.iter().find(|p| p.param == param)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("param,phi,stderr\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.param, p.phi, p.stderr));
        }
        s
    }
}

/// `Φ` at every parameter in `params`. Every point reuses `seed`, so the
/// Monte Carlo noise is shared between neighbouring parameters.
pub fn phi_curve<F>(params: &[f64], build: F, cfg: &PhiConfig, seed: u64) -> Result<PhiCurve>
where
    F: Fn(f64) -> Result<Model> + Sync,
{
    if params.is_empty() || params.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::OutOfRange("parameters must be nonempty and strictly increasing".into()));
    }
    let points: Vec<Result<PhiPoint>> = params
        .par_iter()
        .map(|&param| {
            let b = popdyn_free_energy(&build(param)?, &cfg.popdyn, cfg.samples, seed)?;
            Ok(PhiPoint { param, phi: b.estimate, stderr: b.stderr })
        })
        .collect();
    Ok(PhiCurve { points: points.into_iter().collect::<Result<_>>()? })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroTempEstimate {
    pub estimate: f64,
    /// Parameter at which the estimate was read off.
    pub param: f64,
    /// `(x, offset + scale(x)·(Φ(x+1) − Φ(x)))` per grid point.
    pub differences: Vec<(f64, f64)>,
    pub stabilized: bool,
    pub curve: PhiCurve,
}

fn zero_temp<F, S>(grid: &[f64], build: F, cfg: &PhiConfig, seed: u64, offset: f64, value: S) -> Result<ZeroTempEstimate>
where
    F: Fn(f64) -> Result<Model> + Sync,
    S: Fn(f64, f64, f64) -> f64,
{
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::OutOfRange("grid must be nonempty and strictly increasing".into()));
    }
    let mut params: Vec<f64> = grid.iter().flat_map(|&x| [x, x + 1.0]).collect();
    params.sort_by(f64::total_cmp);
    params.dedup();
    let curve = phi_curve(&params, build, cfg, seed)?;
    let differences: Vec<(f64, f64)> = grid
        .iter()
        .map(|&x| {
            let lo = curve.at(x).expect("grid point evaluated").phi;
            let hi = curve.at(x + 1.0).expect("shifted point evaluated").phi;
            (x, offset + value(x, lo, hi))
        })
        .collect();
    let &(param, estimate) = differences.last().expect("nonempty grid");
    let stabilized = differences.len() >= 2 && {
        let prev = differences[differences.len() - 2].1;
        (estimate - prev).abs() <= cfg.stabilization_tol
    };
    Ok(ZeroTempEstimate { estimate, param, differences, stabilized, curve })
}

/// Max `q`-cut per variable: `d/2 + Φ(β+1) − Φ(β)` for the antiferromagnetic Potts model.
pub fn max_qcut_estimate(d: usize, q: usize, beta_grid: &[f64], cfg: &PhiConfig, seed: u64) -> Result<ZeroTempEstimate> {
    zero_temp(beta_grid, |b| Model::potts(q, d, b), cfg, seed, d as f64 / 2.0, |_, lo, hi| hi - lo)
}

/// Max `k`-SAT per variable: `d/k + (Φ(β+1) − Φ(β))/2`. A violated clause
/// carries weight `(1 − tanh β)/2 ≈ e^{−2β}`, hence the halving.
pub fn max_ksat_estimate(d: usize, k: usize, beta_grid: &[f64], cfg: &PhiConfig, seed: u64) -> Result<ZeroTempEstimate> {
    zero_temp(beta_grid, |b| Model::ksat(k, d, b), cfg, seed, d as f64 / k as f64, |_, lo, hi| (hi - lo) / 2.0)
}

/// Independence ratio: `λ·(Φ(λ+1) − Φ(λ))` with `Φ` taken for the unnormalized
/// prior `(1, λ)`, that is the normalized `Φ` plus `ln(1+λ)`.
pub fn independence_ratio_estimate(d: usize, lambda_grid: &[f64], cfg: &PhiConfig, seed: u64) -> Result<ZeroTempEstimate> {
    if lambda_grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::OutOfRange("fugacities must be positive".into()));
    }
    zero_temp(lambda_grid, |l| Model::hardcore(d, l), cfg, seed, 0.0, |l, lo, hi| {
        l * ((hi + (2.0 + l).ln()) - (lo + (1.0 + l).ln()))
    })
}

/// Largest guard for the brute-force oracles.
pub const BRUTE_FORCE_GUARD: usize = 1 << 24;

fn brute_force<F>(g: &FactorGraph, score: F) -> Result<usize>
where
    F: Fn(&[usize]) -> Option<usize> + Sync,
{
    let total = checked_pow(g.q(), g.n())
        .filter(|&c| c <= BRUTE_FORCE_GUARD)
        .ok_or(Error::SizeGuard { configs: (g.q() as f64).powi(g.n() as i32), guard: BRUTE_FORCE_GUARD as f64 })?;
    let best = (0..total)
        .into_par_iter()
        .fold(
            || (vec![0usize; g.n()], None::<usize>),
            |(mut sigma, best), idx| {
                tuple_decode(idx, g.q(), &mut sigma);
                let s = score(&sigma);
                let best = match (best, s) {
                    (Some(b), Some(s)) => Some(b.max(s)),
                    (b, s) => b.or(s),
                };
                (sigma, best)
            },
        )
        .map(|(_, b)| b)
        .reduce(|| None, |a, b| a.max(b));
    best.ok_or(Error::ZeroWeight)
}

/// Number of constraints whose weight attains its table maximum, maximized over assignments.
pub fn brute_force_max_satisfied(g: &FactorGraph) -> Result<usize> {
    let maxima: Vec<f64> = g.constraints().iter().map(|c| c.weight.table().iter().copied().fold(0.0, f64::max)).collect();
    brute_force(g, |sigma| {
        let mut t = Vec::with_capacity(g.k());
        Some(
            g.constraints()
                .iter()
                .zip(&maxima)
                .filter(|(c, &mx)| {
                    t.clear();
                    t.extend(c.vars.iter().map(|&v| sigma[v]));
                    c.weight.get(&t) == mx
                })
                .count(),
        )
    })
}

/// Maximum number of constraints whose variables are not all equal.
pub fn brute_force_max_cut(g: &FactorGraph) -> Result<usize> {
    brute_force(g, |sigma| {
        Some(g.constraints().iter().filter(|c| c.vars.iter().any(|&v| sigma[v] != sigma[c.vars[0]])).count())
    })
}

/// Largest number of spin-1 variables over assignments of positive weight.
pub fn brute_force_independence_number(g: &FactorGraph) -> Result<usize> {
    if g.q() != 2 {
        return Err(Error::InvalidModel("independent sets need two spins".into()));
    }
    brute_force(g, |sigma| {
        let mut t = Vec::with_capacity(g.k());
        let ok = g.constraints().iter().all(|c| {
            t.clear();
            t.extend(c.vars.iter().map(|&v| sigma[v]));
            c.weight.get(&t) > 0.0
        });
        ok.then(|| sigma.iter().filter(|&&s| s == 1).count())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightFunction;
    use crate::numeric::rng_from_seed;

    fn small_cfg() -> PhiConfig {
        PhiConfig { popdyn: PopDynConfig { size: 200, sweeps: 20, damping: 0.0 }, samples: 4000, stabilization_tol: 0.05 }
    }

    #[test]
    fn triangle_cut() {
        let w = WeightFunction::new(2, 2, vec![0.5, 1.0, 1.0, 0.5]).unwrap();
        let cs = vec![(vec![0, 1], w.clone()), (vec![1, 2], w.clone()), (vec![2, 0], w)];
        let g = FactorGraph::from_constraints(2, 2, 2, vec![vec![0.5, 0.5]; 3], cs).unwrap();
        assert_eq!(brute_force_max_cut(&g).unwrap(), 2);
        assert_eq!(brute_force_max_satisfied(&g).unwrap(), 2);
    }

    #[test]
    fn path_independence() {
        let m = Model::hardcore(3, 1.0).unwrap();
        let hc = m.sample_weight_function(&mut rng_from_seed(0));
        let cs = vec![(vec![0, 1], hc.clone()), (vec![1, 2], hc.clone()), (vec![2, 3], hc)];
        let g = FactorGraph::from_constraints(2, 2, 3, vec![m.prior().to_vec(); 4], cs).unwrap();
        assert_eq!(brute_force_independence_number(&g).unwrap(), 2);
    }

    #[test]
    fn qcut_bounded_and_finite_at_zero() {
        let est = max_qcut_estimate(3, 3, &[0.0, 1.0], &small_cfg(), 1).unwrap();
        assert!(est.differences.iter().all(|d| d.1.is_finite()));
        assert!(est.estimate <= 1.5 + 1e-9);
        assert_eq!(est.curve.points.len(), 3);
    }

    #[test]
    fn ksat_bounded() {
        // finite β overshoots by about (d/k)·e^{−2β}; the rest is Monte Carlo noise
        let est = max_ksat_estimate(3, 3, &[6.0], &small_cfg(), 2).unwrap();
        assert!(est.estimate <= 1.0 + 0.02, "{est:?}");
        assert!(!est.stabilized);
    }

    #[test]
    fn independence_small_lambda() {
        let est = independence_ratio_estimate(3, &[0.01], &small_cfg(), 3).unwrap();
        assert!(est.estimate >= 0.0 && est.estimate < 0.05, "{}", est.estimate);
    }

    #[test]
    fn curve_csv() {
        let c = PhiCurve { points: vec![PhiPoint { param: 0.5, phi: -1.0, stderr: 0.0 }] };
        assert_eq!(c.to_csv(), "param,phi,stderr\n0.5,-1,0\n");
    }
}
