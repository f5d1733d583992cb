//! Population dynamics for the replica-symmetric fixed point and Monte Carlo
//! evaluation of the Bethe functional.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{constraint_factor, variable_factor, Attached, Kernel, KernelEnsemble};
use crate::model::Model;
use crate::numeric::{categorical, mean_stderr, normalize, rng_from_seed};

/// A population of messages on `Ω`; read as a one-row kernel whose columns are the members.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    q: usize,
    members: Vec<f64>,
    generation: usize,
}

impl Population {
    pub fn uniform(q: usize, size: usize) -> Self {
        Population { q, members: vec![1.0 / q as f64; q * size], generation: 0 }
    }

    pub fn random<R: Rng + ?Sized>(q: usize, size: usize, rng: &mut R) -> Self {
        let mut members: Vec<f64> = (0..q * size).map(|_| rng.gen::<f64>() + 1e-3).collect();
        for m in members.chunks_mut(q) {
            normalize(m);
        }
        Population { q, members, generation: 0 }
    }

    /// Population with the given members, each normalized.
    pub fn from_members(q: usize, members: &[Vec<f64>]) -> Result<Self> {
        let mut flat = Vec::with_capacity(q * members.len());
        for m in members {
            if m.len() != q {
                return Err(Error::OutOfRange(format!("member of length {} for q = {q}", m.len())));
            }
            let mut m = m.clone();
            normalize(&mut m).ok_or(Error::OutOfRange("member with zero mass".into()))?;
            flat.extend(m);
        }
        Ok(Population { q, members: flat, generation: 0 })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.members.len() / self.q
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn member(&self, i: usize) -> &[f64] {
        &self.members[i * self.q..(i + 1) * self.q]
    }

    /// Largest total-variation distance of a member from the uniform distribution.
    pub fn max_deviation_from_uniform(&self) -> f64 {
        let u = vec![1.0 / self.q as f64; self.q];
        self.members.chunks(self.q).map(|m| crate::numeric::tv(m, &u)).fold(0.0, f64::max)
    }

    pub fn to_kernel(&self) -> Kernel {
        let cells = self.members.chunks(self.q).map(|m| m.to_vec()).collect();
        Kernel::one_row(self.q, cells).expect("members are distributions")
    }
}

/// Parameters of [`population_dynamics`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopDynConfig {
    pub size: usize,
    pub sweeps: usize,
    /// Weight of the old member when mixing in the update.
    pub damping: f64,
}

impl Default for PopDynConfig {
    fn default() -> Self {
        PopDynConfig { size: 1000, sweeps: 100, damping: 0.0 }
    }
}

/// Runs `sweeps` sweeps from a random population. Each sweep visits every
/// member once in a random order and replaces it by the variable-side BP update
/// fed by `d−1` fresh constraints whose other slots read random members.
pub fn population_dynamics<R: Rng + ?Sized>(model: &Model, cfg: &PopDynConfig, rng: &mut R) -> Result<Population> {
    let pop = Population::random(model.q(), cfg.size, rng);
    evolve(model, pop, cfg.sweeps, cfg.damping, rng)
}

/// Continues population dynamics from a given population.
pub fn evolve<R: Rng + ?Sized>(model: &Model, mut pop: Population, sweeps: usize, damping: f64, rng: &mut R) -> Result<Population> {
    if pop.len() < 10 {
        return Err(Error::OutOfRange("population size must be at least 10".into()));
    }
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::OutOfRange("damping must lie in [0, 1)".into()));
    }
    if pop.q != model.q() {
        return Err(Error::OutOfRange("population and model have different spin counts".into()));
    }
    let (q, k, d) = (model.q(), model.k(), model.d());
    let size = pop.len();
    let mut order: Vec<usize> = (0..size).collect();
    let mut msg = vec![0.0; q];
    let mut buf = vec![0.0; q];
    let mut inputs: Vec<usize> = vec![0; k];
    for _ in 0..sweeps {
        order.shuffle(rng);
        for &target in &order {
            msg.copy_from_slice(model.prior());
            for _ in 0..d - 1 {
                let psi = model.sample_weight_function(rng);
                let h = rng.gen_range(0..k);
                for x in inputs.iter_mut() {
                    *x = rng.gen_range(0..size);
                }
                let msgs: Vec<&[f64]> = inputs.iter().map(|&i| pop.member(i)).collect();
                psi.contract(h, &msgs, &mut buf);
                for (x, y) in msg.iter_mut().zip(&buf) {
                    *x *= y;
                }
            }
            normalize(&mut msg).ok_or(Error::Degenerate { constraint: 0, slot: 0 })?;
            let slot = &mut pop.members[target * q..(target + 1) * q];
            for (x, y) in slot.iter_mut().zip(&msg) {
                *x = (1.0 - damping) * y + damping * *x;
            }
        }
        pop.generation += 1;
    }
    Ok(pop)
}

/// Monte Carlo estimate of the Bethe functional.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetheEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub draws: usize,
    pub rejected: usize,
}

/// Default cap on the fraction of draws with a vanishing logarithm argument.
pub const DEFAULT_REJECTION_CAP: f64 = 0.1;

/// Single draw of the Bethe functional integrand, or `None` for a zero argument.
fn bethe_draw<R: Rng + ?Sized>(model: &Model, ens: &KernelEnsemble, rng: &mut R) -> Option<f64> {
    let (k, d) = (model.k(), model.d());
    let probs: Vec<f64> = ens.members().iter().map(|(p, _)| *p).collect();
    let kernel = &ens.members()[if probs.len() == 1 { 0 } else { categorical(rng, &probs) }].1;
    let cons: Vec<Attached> = (0..d).map(|_| Attached::sample(model, kernel.cols(), rng)).collect();
    let mut buf = vec![0.0; model.q()];
    let (mut t1, mut t2) = (0.0, 0.0);
    for r in 0..kernel.rows() {
        let w = kernel.weight(r);
        t1 += w * variable_factor(model.prior(), &cons, kernel, r, &mut buf);
        t2 += w * constraint_factor(&cons[0], kernel, r);
    }
    if !(t1 > 0.0 && t2 > 0.0) {
        return None;
    }
    Some(t1.ln() - d as f64 * (1.0 - 1.0 / k as f64) * t2.ln())
}

/// Estimates `B(π)` from `samples` independent draws of kernel, constraints,
/// slots and columns; the integral over rows is exact.
pub fn bethe_functional<R: Rng + ?Sized>(
    ens: &KernelEnsemble,
    model: &Model,
    samples: usize,
    rejection_cap: f64,
    rng: &mut R,
) -> Result<BetheEstimate> {
    if samples == 0 {
        return Err(Error::OutOfRange("need at least one sample".into()));
    }
    if ens.members().iter().any(|(_, k)| k.q() != model.q()) {
        return Err(Error::OutOfRange("ensemble and model have different spin counts".into()));
    }
    let seed: u64 = rng.gen();
    let draws: Vec<Option<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = crate::numeric::substream(seed, i as u64);
            bethe_draw(model, ens, &mut r)
        })
        .collect();
    let vals: Vec<f64> = draws.iter().flatten().copied().collect();
    let rejected = samples - vals.len();
    let frac = rejected as f64 / samples as f64;
    if frac > rejection_cap || vals.is_empty() {
        return Err(Error::RejectionCap(frac));
    }
    let (estimate, stderr) = mean_stderr(&vals);
    Ok(BetheEstimate { estimate, stderr, draws: vals.len(), rejected })
}

/// Population dynamics followed by the Bethe functional of the resulting one-row kernel.
pub fn popdyn_free_energy(model: &Model, cfg: &PopDynConfig, samples: usize, seed: u64) -> Result<BetheEstimate> {
    let mut rng = rng_from_seed(seed);
    let pop = population_dynamics(model, cfg, &mut rng)?;
    bethe_functional(&KernelEnsemble::single(pop.to_kernel()), model, samples, DEFAULT_REJECTION_CAP, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rng_from_seed;

    #[test]
    fn beta_zero_collapses() {
        let m = Model::potts(3, 3, 0.0).unwrap();
        let pop = population_dynamics(&m, &PopDynConfig { size: 50, sweeps: 1, damping: 0.0 }, &mut rng_from_seed(1)).unwrap();
        assert!(pop.max_deviation_from_uniform() < 1e-15);
    }

    #[test]
    fn hardcore_cap() {
        let lambda = 2.5;
        let m = Model::hardcore(3, lambda).unwrap();
        let pop = population_dynamics(&m, &PopDynConfig { size: 200, sweeps: 20, damping: 0.0 }, &mut rng_from_seed(2)).unwrap();
        for i in 0..pop.len() {
            assert!(pop.member(i)[1] <= lambda / (1.0 + lambda) + 1e-15);
        }
    }

    #[test]
    fn spin_glass_beta_zero_functional() {
        let m = Model::kspin(2, 4, 0.0).unwrap();
        let ens = KernelEnsemble::single(Kernel::random(2, 3, 5, &mut rng_from_seed(3)));
        let b = bethe_functional(&ens, &m, 200, 0.1, &mut rng_from_seed(4)).unwrap();
        assert!((b.estimate - (1.0 - 2.0) * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn potts_uniform_closed_form() {
        let (q, d, beta) = (3usize, 4usize, 0.7f64);
        let m = Model::potts(q, d, beta).unwrap();
        let ens = KernelEnsemble::single(Kernel::uniform(q, 4));
        let b = bethe_functional(&ens, &m, 100, 0.1, &mut rng_from_seed(5)).unwrap();
        let c = (q as f64 - 1.0 + (-beta).exp()) / q as f64;
        assert!((b.estimate - d as f64 / 2.0 * c.ln()).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let m = Model::kspin(2, 3, 1.0).unwrap();
        let cfg = PopDynConfig { size: 30, sweeps: 3, damping: 0.2 };
        let a = popdyn_free_energy(&m, &cfg, 100, 9).unwrap();
        let b = popdyn_free_energy(&m, &cfg, 100, 9).unwrap();
        assert_eq!(a, b);
    }
}
