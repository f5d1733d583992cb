//! Small numerical helpers shared across modules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent generator from `rng` by drawing a fresh seed.
pub fn fork<R: Rng + ?Sized>(rng: &mut R) -> SimRng {
    ChaCha8Rng::from_seed(rng.gen())
}

/// Generator for sub-stream `stream` of a root seed.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Normalizes in place and returns the original sum, or `None` if the sum is not positive.
pub fn normalize(v: &mut [f64]) -> Option<f64> {
    let s: f64 = v.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
    Some(s)
}

/// Total variation distance, half the L1 norm.
pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Standard normal draw by Box–Muller from two 64-bit uniforms.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
    empty: bool,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp { max: 0.0, sum: 0.0, empty: true }
    }

    pub fn add(&mut self, x: f64) {
        if self.empty {
            self.max = x;
            self.sum = 1.0;
            self.empty = false;
        } else if x > self.max {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.sum += (x - self.max).exp();
        }
    }

    /// `None` when nothing was added (total weight zero).
    pub fn value(&self) -> Option<f64> {
        if self.empty {
            None
        } else {
            Some(self.max + self.sum.ln())
        }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Mixed-radix index of a tuple, first coordinate most significant.
pub fn tuple_index(t: &[usize], q: usize) -> usize {
    t.iter().fold(0, |acc, &s| acc * q + s)
}

/// Inverse of [`tuple_index`].
pub fn tuple_decode(mut idx: usize, q: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = idx % q;
        idx /= q;
    }
}

pub fn checked_pow(q: usize, k: usize) -> Option<usize> {
    q.checked_pow(k as u32)
}

/// Uniform draw from a categorical distribution given by nonnegative weights.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_direct() {
        let xs = [-1.0, 0.5, 3.0, -20.0];
        let mut acc = LogSumExp::new();
        for &x in &xs {
            acc.add(x);
        }
        let direct = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((acc.value().unwrap() - direct).abs() < 1e-14);
        assert_eq!(LogSumExp::new().value(), None);
    }

    #[test]
    fn tuple_roundtrip() {
        let mut out = [0; 3];
        for i in 0..27 {
            tuple_decode(i, 3, &mut out);
            assert_eq!(tuple_index(&out, 3), i);
        }
    }

    #[test]
    fn normal_moments() {
        let mut rng = rng_from_seed(5);
        let xs: Vec<f64> = (0..100_000).map(|_| standard_normal(&mut rng)).collect();
        let (m, _) = mean_stderr(&xs);
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!(m.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.02);
    }
}
