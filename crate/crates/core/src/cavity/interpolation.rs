//! The interpolating graphs `G_t` between the random graph (`t = 0`) and a
//! graph of independent stars fed by a kernel (`t = 1`).

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::Oracle;
use crate::graph::{Constraint, FactorGraph};
use crate::kernel::Kernel;
use crate::model::Model;
use crate::numeric::{mean_stderr, substream, LogSumExp};

/// A binary factor tying the kernel row `s` to a variable: `table[r*q + σ]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinaryFactor {
    pub var: usize,
    pub table: Vec<f64>,
}

/// `G_t` with the row variable `s` kept implicit: conditionally on the row the
/// binary factors become variable priors and the unary factors constants.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationGraph {
    pub t: f64,
    /// The variables with the `k`-ary constraints `a_i`.
    pub base: FactorGraph,
    /// Prior of `s` over kernel rows.
    pub row_weights: Vec<f64>,
    /// The factors `a′_i`.
    pub binary: Vec<BinaryFactor>,
    /// The factors `a″_i`, one value per row.
    pub unary: Vec<Vec<f64>>,
}

impl InterpolationGraph {
    pub fn rows(&self) -> usize {
        self.row_weights.len()
    }

    /// Base graph with the binary factors of row `r` folded into the priors.
    pub fn conditioned(&self, r: usize) -> Result<FactorGraph> {
        let q = self.base.q();
        let mut priors = self.base.priors().to_vec();
        for b in &self.binary {
            for (s, p) in priors[b.var].iter_mut().enumerate() {
                *p *= b.table[r * q + s];
            }
        }
        self.base.with_priors(priors)
    }

    /// `ln Z(G_t)`, summing over rows exactly.
    pub fn log_z(&self, oracle: &Oracle) -> Result<f64> {
        let mut acc = LogSumExp::new();
        for r in 0..self.rows() {
            let mut lz = self.row_weights[r].ln();
            for u in &self.unary {
                lz += u[r].ln();
            }
            match oracle.log_partition_function(&self.conditioned(r)?, None)? {
                Some(z) => acc.add(lz + z),
                None => continue,
            }
        }
        acc.value().ok_or(Error::ZeroWeight)
    }
}

/// Parameters of the interpolation family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterpolationConfig {
    pub n: usize,
    pub eps: f64,
    /// Cap on resampling the constraint counts.
    pub max_tries: usize,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        InterpolationConfig { n: 12, eps: 0.1, max_tries: 10_000 }
    }
}

/// Poisson quantile function; monotone in both arguments, which couples the
/// counts at different `t` drawn from the same uniform.
fn poisson_quantile(lambda: f64, u: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let mut p = (-lambda).exp();
    let mut cdf = p;
    let mut x = 0usize;
    while u > cdf && p > 0.0 {
        x += 1;
        p *= lambda / x as f64;
        cdf += p;
    }
    x
}

/// Builds `G_t` from `seed`. All randomness is drawn from per-role substreams
/// in a fixed order, so graphs with the same seed at different `t` share their
/// pairing, weight functions and columns.
pub fn interpolation_graph(model: &Model, kappa: &Kernel, t: f64, cfg: &InterpolationConfig, seed: u64) -> Result<InterpolationGraph> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange(format!("t = {t} outside [0, 1]")));
    }
    if kappa.q() != model.q() {
        return Err(Error::OutOfRange("kernel and model have different spin counts".into()));
    }
    let (q, k, d, n) = (model.q(), model.k(), model.d(), cfg.n);
    let dn = (d * n) as f64;
    let scale = (-cfg.eps).exp() * dn;
    let kf = k as f64;
    let (l1, l2, l3) = ((1.0 - t) * scale / kf, t * scale, (1.0 - t) * (kf - 1.0) * scale / kf);

    let mut counts = substream(seed, 0);
    let (m, m1, m2) = (|| {
        for _ in 0..cfg.max_tries {
            let m = poisson_quantile(l1, counts.gen());
            let m1 = poisson_quantile(l2, counts.gen());
            let m2 = poisson_quantile(l3, counts.gen());
            if k * m + m1 <= d * n {
                return Ok((m, m1, m2));
            }
        }
        Err(Error::RetryLimit(cfg.max_tries))
    })()?;

    let mut perm: Vec<usize> = (0..d * n).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut substream(seed, 1));

    let mut wrng = substream(seed, 2);
    let constraints = (0..m)
        .map(|a| {
            let slots = &perm[a * k..(a + 1) * k];
            Constraint {
                vars: slots.iter().map(|c| c / d).collect(),
                clones: slots.iter().map(|c| c % d).collect(),
                weight: model.sample_weight_function(&mut wrng),
            }
        })
        .collect();
    let base = FactorGraph::from_parts(q, k, d, vec![model.prior().to_vec(); n], constraints)?;

    let rows = kappa.rows();
    let cols = kappa.cols();
    let mut brng = substream(seed, 3);
    let mut buf = vec![0.0; q];
    let binary = (0..m1)
        .map(|i| {
            let psi = model.sample_weight_function(&mut brng);
            let h = brng.gen_range(0..k);
            let xs: Vec<usize> = (0..k).map(|_| brng.gen_range(0..cols)).collect();
            let mut table = vec![0.0; rows * q];
            for r in 0..rows {
                let msgs: Vec<&[f64]> = xs.iter().map(|&x| kappa.cell(r, x)).collect();
                psi.contract(h, &msgs, &mut buf);
                table[r * q..(r + 1) * q].copy_from_slice(&buf);
            }
            BinaryFactor { var: perm[k * m + i] / d, table }
        })
        .collect();
    let mut urng = substream(seed, 4);
    let unary = (0..m2)
        .map(|_| {
            let psi = model.sample_weight_function(&mut urng);
            let xs: Vec<usize> = (0..k).map(|_| urng.gen_range(0..cols)).collect();
            (0..rows)
                .map(|r| {
                    let msgs: Vec<&[f64]> = xs.iter().map(|&x| kappa.cell(r, x)).collect();
                    psi.expectation(&msgs)
                })
                .collect()
        })
        .collect();
    Ok(InterpolationGraph { t, base, row_weights: kappa.weights().to_vec(), binary, unary })
}

/// Mean of `ln Z(G_t)/n` at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TPoint {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Paired difference between consecutive grid points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiff {
    pub t0: f64,
    pub t1: f64,
    pub mean: f64,
    pub stderr: f64,
    /// Mean difference below −3 standard errors.
    pub decrease: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub points: Vec<TPoint>,
    pub steps: Vec<StepDiff>,
    /// Least-squares slope of the means against `t`.
    pub slope: f64,
    pub flagged: bool,
}

/// Estimates `E ln Z(G_t)/n` on `t_grid`, graph `i` using the same seed at
/// every `t`, and flags any significant decrease between neighbours.
pub fn interpolation_monotonicity_check(
    model: &Model,
    kappa: &Kernel,
    t_grid: &[f64],
    graphs: usize,
    cfg: &InterpolationConfig,
    seed: u64,
) -> Result<MonotonicityReport> {
    if t_grid.windows(2).any(|w| !(w[0] < w[1])) || t_grid.is_empty() {
        return Err(Error::OutOfRange("t grid must be nonempty and strictly increasing".into()));
    }
    if graphs < 2 {
        return Err(Error::OutOfRange("need at least two graphs per grid point".into()));
    }
    let oracle = Oracle::default();
    let n = cfg.n as f64;
    let values: Vec<Result<Vec<f64>>> = (0..graphs)
        .into_par_iter()
        .map(|i| {
            let graph_seed: u64 = substream(seed, i as u64).gen();
            t_grid
                .iter()
                .map(|&t| Ok(interpolation_graph(model, kappa, t, cfg, graph_seed)?.log_z(&oracle)? / n))
                .collect()
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    let column = |j: usize| -> Vec<f64> { values.iter().map(|v| v[j]).collect() };
    let points: Vec<TPoint> = t_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let (mean, stderr) = mean_stderr(&column(j));
            TPoint { t, mean, stderr }
        })
        .collect();
    let steps: Vec<StepDiff> = (1..t_grid.len())
        .map(|j| {
            let diffs: Vec<f64> = values.iter().map(|v| v[j] - v[j - 1]).collect();
            let (mean, stderr) = mean_stderr(&diffs);
            StepDiff { t0: t_grid[j - 1], t1: t_grid[j], mean, stderr, decrease: mean < -3.0 * stderr }
        })
        .collect();
    let tm = t_grid.iter().sum::<f64>() / t_grid.len() as f64;
    let ym = points.iter().map(|p| p.mean).sum::<f64>() / points.len() as f64;
    let (num, den) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + (p.t - tm) * (p.mean - ym), b + (p.t - tm).powi(2)));
    let slope = if den > 0.0 { num / den } else { 0.0 };
    let flagged = steps.iter().any(|s| s.decrease);
    Ok(MonotonicityReport { points, steps, slope, flagged })
}
