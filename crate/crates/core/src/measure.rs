//! Explicit probability measures on `Ω^n` given by weighted configuration lists.

use crate::error::{Error, Result};
use crate::numeric::{checked_pow, tuple_decode, tuple_index};

/// A probability measure with finite explicit support, kept in canonical form:
/// configurations sorted lexicographically, no duplicates, no zero weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    q: usize,
    n: usize,
    spins: Vec<u8>,
    probs: Vec<f64>,
}

/// Largest support a product measure may expand to.
pub const PRODUCT_GUARD: usize = 1 << 22;

impl Measure {
    /// Normalizes the weights, merges duplicate configurations and drops zero weights.
    pub fn new(q: usize, n: usize, configs: Vec<(Vec<usize>, f64)>) -> Result<Measure> {
        if q < 2 || q > 255 {
            return Err(Error::OutOfRange(format!("q = {q} not supported")));
        }
        let mut items: Vec<(Vec<u8>, f64)> = Vec::with_capacity(configs.len());
        for (c, w) in configs {
            if c.len() != n || c.iter().any(|&s| s >= q) {
                return Err(Error::OutOfRange("configuration has the wrong length or spin".into()));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::OutOfRange("weights must be finite and nonnegative".into()));
            }
            if w > 0.0 {
                items.push((c.iter().map(|&s| s as u8).collect(), w));
            }
        }
        items.sort_by(|a, b| a.0.cmp(&b.0));
        let mut spins = Vec::with_capacity(items.len() * n);
        let mut probs: Vec<f64> = Vec::with_capacity(items.len());
        let mut last: Option<Vec<u8>> = None;
        for (c, w) in items {
            if last.as_ref() == Some(&c) {
                *probs.last_mut().unwrap() += w;
            } else {
                spins.extend_from_slice(&c);
                probs.push(w);
                last = Some(c);
            }
        }
        let total: f64 = probs.iter().sum();
        if probs.is_empty() || !(total > 0.0) {
            return Err(Error::ZeroWeight);
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Measure { q, n, spins, probs })
    }

    pub fn point_mass(q: usize, config: &[usize]) -> Result<Measure> {
        Measure::new(q, config.len(), vec![(config.to_vec(), 1.0)])
    }

    /// Product of the given single-site distributions.
    pub fn product(q: usize, marginals: &[Vec<f64>]) -> Result<Measure> {
        let n = marginals.len();
        let size = checked_pow(q, n).filter(|&s| s <= PRODUCT_GUARD).ok_or(Error::SizeGuard {
            configs: (q as f64).powi(n as i32),
            guard: PRODUCT_GUARD as f64,
        })?;
        let mut c = vec![0usize; n];
        let configs = (0..size)
            .filter_map(|idx| {
                tuple_decode(idx, q, &mut c);
                let w: f64 = c.iter().enumerate().map(|(v, &s)| marginals[v][s]).product();
                (w > 0.0).then(|| (c.clone(), w))
            })
            .collect();
        Measure::new(q, n, configs)
    }

    /// Convex combination of measures on the same space.
    pub fn mixture(parts: &[(f64, &Measure)]) -> Result<Measure> {
        let first = parts.first().ok_or(Error::ZeroWeight)?.1;
        let mut configs = Vec::new();
        for (w, m) in parts {
            if m.q != first.q || m.n != first.n {
                return Err(Error::OutOfRange("mixture components live on different spaces".into()));
            }
            for i in 0..m.len() {
                configs.push((m.config_vec(i), w * m.probs[i]));
            }
        }
        Measure::new(first.q, first.n, configs)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Support size.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn config(&self, i: usize) -> &[u8] {
        &self.spins[i * self.n..(i + 1) * self.n]
    }

    pub fn config_vec(&self, i: usize) -> Vec<usize> {
        self.config(i).iter().map(|&s| s as usize).collect()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn marginal(&self, v: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.q];
        for i in 0..self.len() {
            out[self.spins[i * self.n + v] as usize] += self.probs[i];
        }
        out
    }

    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.q]; self.n];
        for i in 0..self.len() {
            let c = self.config(i);
            for (v, &s) in c.iter().enumerate() {
                out[v][s as usize] += self.probs[i];
            }
        }
        out
    }

    /// Joint law of the listed positions (repeats allowed) as a table over `Ω^ℓ`.
    pub fn joint(&self, positions: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; self.q.pow(positions.len() as u32)];
        for i in 0..self.len() {
            let c = self.config(i);
            let idx = positions.iter().fold(0usize, |acc, &v| acc * self.q + c[v] as usize);
            out[idx] += self.probs[i];
        }
        out
    }

    /// Probability of the subcube fixing the listed variables.
    pub fn mass(&self, pins: &[(usize, usize)]) -> f64 {
        (0..self.len())
            .filter(|&i| {
                let c = self.config(i);
                pins.iter().all(|&(v, s)| c[v] as usize == s)
            })
            .map(|i| self.probs[i])
            .sum()
    }

    /// Conditional measure on a subcube, or `None` if it has zero mass.
    pub fn condition(&self, pins: &[(usize, usize)]) -> Option<Measure> {
        let configs: Vec<(Vec<usize>, f64)> = (0..self.len())
            .filter(|&i| {
                let c = self.config(i);
                pins.iter().all(|&(v, s)| c[v] as usize == s)
            })
            .map(|i| (self.config_vec(i), self.probs[i]))
            .collect();
        Measure::new(self.q, self.n, configs).ok()
    }

    pub fn product_of_marginals(&self) -> Result<Measure> {
        Measure::product(self.q, &self.marginals())
    }

    /// Whether the measure equals the product of its marginals up to `tol`.
    pub fn is_product(&self, tol: f64) -> bool {
        let margs = self.marginals();
        let support: f64 = margs.iter().map(|m| m.iter().filter(|&&p| p > 0.0).count() as f64).product();
        if (support - self.len() as f64).abs() > 0.5 {
            return false;
        }
        (0..self.len()).all(|i| {
            let c = self.config(i);
            let p: f64 = c.iter().enumerate().map(|(v, &s)| margs[v][s as usize]).product();
            (p - self.probs[i]).abs() <= tol
        })
    }

    /// Same support and probabilities within `tol`.
    pub fn approx_eq(&self, other: &Measure, tol: f64) -> bool {
        self.q == other.q
            && self.n == other.n
            && self.spins == other.spins
            && self.probs.iter().zip(&other.probs).all(|(a, b)| (a - b).abs() <= tol)
    }

    /// Index of a configuration in the support.
    pub fn find(&self, config: &[usize]) -> Option<usize> {
        let key: Vec<u8> = config.iter().map(|&s| s as u8).collect();
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.config(mid).cmp(&key[..]) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Code of a configuration as a base-`q` integer.
    pub fn code(&self, i: usize) -> usize {
        let c: Vec<usize> = self.config_vec(i);
        tuple_index(&c, self.q)
    }
}
