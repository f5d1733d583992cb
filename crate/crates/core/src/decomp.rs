//! Pinning decompositions and their quality measures: ε-symmetry, extremality,
//! the discrete cut metric and Bethe-state checks.

use rand::seq::index;
use rand::Rng;
use serde::Serialize;

use crate::bp::{bp_residual, bp_step, MessageSet};
use crate::error::{Error, Result};
use crate::exact::{Event, Oracle};
use crate::graph::FactorGraph;
use crate::lp;
use crate::measure::{Measure, PRODUCT_GUARD};
use crate::numeric::{mean_stderr, tuple_decode, tv};

pub use crate::kernel::{CutBounds, CutMode};

/// Largest number of pinning assignments enumerated.
pub const PART_GUARD: usize = 1 << 20;

/// How many variables to pin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theta {
    Fixed(usize),
    /// Uniform on `1..=max`.
    Range(usize),
}

/// One pinning subcube and its mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Part {
    /// Spins of the pinned variables, in the order of [`Decomposition::pinned`].
    pub assignment: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub pinned: Vec<usize>,
    pub parts: Vec<Part>,
    /// Total mass of assignments with (numerically) zero weight.
    pub residual_weight: f64,
}

impl Decomposition {
    /// Pins defining part `i`.
    pub fn pins(&self, i: usize) -> Vec<(usize, usize)> {
        self.pinned.iter().copied().zip(self.parts[i].assignment.iter().copied()).collect()
    }

    pub fn event(&self, i: usize) -> Event {
        Event::Subcube(self.pins(i))
    }

    /// `μ(·|part i)`.
    pub fn conditional(&self, mu: &Measure, i: usize) -> Option<Measure> {
        mu.condition(&self.pins(i))
    }

    pub fn total_weight(&self) -> f64 {
        self.parts.iter().map(|p| p.weight).sum::<f64>() + self.residual_weight
    }
}

fn draw_theta<R: Rng + ?Sized>(theta: Theta, rng: &mut R) -> usize {
    match theta {
        Theta::Fixed(t) => t,
        Theta::Range(0) => 0,
        Theta::Range(max) => rng.gen_range(1..=max),
    }
}

/// Pins a uniformly random set of `θ` variables and lists every assignment
/// with its mass under `mu`.
pub fn decompose_measure<R: Rng + ?Sized>(mu: &Measure, theta: Theta, rng: &mut R) -> Result<Decomposition> {
    let t = draw_theta(theta, rng);
    if t > mu.n() {
        return Err(Error::OutOfRange(format!("cannot pin {t} of {} variables", mu.n())));
    }
    let count = crate::numeric::checked_pow(mu.q(), t)
        .filter(|&c| c <= PART_GUARD)
        .ok_or(Error::SizeGuard { configs: (mu.q() as f64).powi(t as i32), guard: PART_GUARD as f64 })?;
    let mut pinned = index::sample(rng, mu.n(), t).into_vec();
    pinned.sort_unstable();
    let joint = mu.joint(&pinned);
    debug_assert_eq!(joint.len(), count);
    let mut parts = Vec::new();
    let mut residual_weight = 0.0;
    let mut a = vec![0usize; t];
    for (idx, &w) in joint.iter().enumerate() {
        if w > 1e-300 {
            tuple_decode(idx, mu.q(), &mut a);
            parts.push(Part { assignment: a.clone(), weight: w });
        } else {
            residual_weight += w;
        }
    }
    Ok(Decomposition { pinned, parts, residual_weight })
}

/// [`decompose_measure`] applied to the Boltzmann distribution of `g`.
pub fn sample_pinning_decomposition<R: Rng + ?Sized>(
    g: &FactorGraph,
    theta: Theta,
    rng: &mut R,
) -> Result<Decomposition> {
    let mu = Oracle::default().boltzmann(g, None)?;
    decompose_measure(&mu, theta, rng)
}

/// Estimate of the `ℓ`-point symmetry defect `n^{-ℓ} Σ ‖μ_{v₁…v_ℓ} − ⊗μ_{v_i}‖`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub estimate: f64,
    pub stderr: f64,
    /// Number of tuples evaluated (all of them when `exact`).
    pub samples: usize,
    pub exact: bool,
}

/// Tuple averages are exact when `n^ℓ` is at most this.
pub const SYMMETRY_EXACT_LIMIT: usize = 4096;

fn tuple_defect(mu: &Measure, marginals: &[Vec<f64>], vars: &[usize]) -> f64 {
    let q = mu.q();
    let joint = mu.joint(vars);
    let mut t = vec![0usize; vars.len()];
    let product: Vec<f64> = (0..joint.len())
        .map(|idx| {
            tuple_decode(idx, q, &mut t);
            t.iter().zip(vars).map(|(&s, &v)| marginals[v][s]).product()
        })
        .collect();
    tv(&joint, &product)
}

fn distinct(vars: &[usize]) -> bool {
    vars.iter().enumerate().all(|(i, v)| !vars[..i].contains(v))
}

/// `n^{-ℓ}` times the sum over `ℓ`-tuples of distinct variables of the total
/// variation between the joint law and the product of its marginals. Tuples
/// with a repeated variable count as zero, so product measures score exactly 0.
pub fn epsilon_symmetry<R: Rng + ?Sized>(mu: &Measure, ell: usize, samples: usize, rng: &mut R) -> Result<SymmetryReport> {
    if ell < 2 {
        return Err(Error::OutOfRange("ℓ must be at least 2".into()));
    }
    let n = mu.n();
    let marginals = mu.marginals();
    let total = crate::numeric::checked_pow(n, ell);
    let mut vars = vec![0usize; ell];
    if let Some(total) = total.filter(|&t| t <= SYMMETRY_EXACT_LIMIT) {
        let mut sum = 0.0;
        for idx in 0..total {
            tuple_decode(idx, n, &mut vars);
            if distinct(&vars) {
                sum += tuple_defect(mu, &marginals, &vars);
            }
        }
        return Ok(SymmetryReport { estimate: sum / total as f64, stderr: 0.0, samples: total, exact: true });
    }
    if samples == 0 {
        return Err(Error::OutOfRange("need at least one sample".into()));
    }
    let vals: Vec<f64> = (0..samples)
        .map(|_| {
            for v in vars.iter_mut() {
                *v = rng.gen_range(0..n);
            }
            if distinct(&vars) {
                tuple_defect(mu, &marginals, &vars)
            } else {
                0.0
            }
        })
        .collect();
    let (estimate, stderr) = mean_stderr(&vals);
    Ok(SymmetryReport { estimate, stderr, samples, exact: false })
}

/// Guards of the exact discrete cut distance.
pub const DISCRETE_EXACT_PAIRS: usize = 64;
pub const DISCRETE_EXACT_SITES: usize = 12;

fn marginal_lower(mu: &Measure, nu: &Measure) -> f64 {
    let (a, b) = (mu.marginals(), nu.marginals());
    let s: f64 = a.iter().zip(&b).map(|(x, y)| tv(x, y)).sum();
    s / (2.0 * mu.q() as f64 * mu.n() as f64)
}

/// Expected Hamming distance per site under the product coupling.
fn product_coupling_bound(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(b).map(|(x, y)| 1.0 - x.iter().zip(y).map(|(s, t)| s * t).sum::<f64>()).sum::<f64>() / n
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Bounds on the discrete cut distance
/// `(1/n) min_γ max_{I,B,ω} |Σ_{i∈I} Σ_{(σ,τ)∈B} γ(σ,τ)(1{σ_i=ω} − 1{τ_i=ω})|`.
///
/// The lower bound is `Σ_v ‖μ_v − ν_v‖_TV / (2|Ω|n)`. In exact mode the upper
/// bound is the min-max solved by constraint generation over couplings.
pub fn discrete_cut_distance(mu: &Measure, nu: &Measure, mode: CutMode) -> Result<CutBounds> {
    if mu.q() != nu.q() || mu.n() != nu.n() {
        return Err(Error::OutOfRange("measures live on different spaces".into()));
    }
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::OutOfRange("measures must be nonempty".into()));
    }
    if mu == nu {
        return Ok(CutBounds::zero());
    }
    let (n, q) = (mu.n(), mu.q());
    let lower = marginal_lower(mu, nu);
    match mode {
        CutMode::Exact => {
            let pairs = mu.len() * nu.len();
            if pairs > DISCRETE_EXACT_PAIRS || n > DISCRETE_EXACT_SITES {
                return Err(Error::SizeGuard { configs: pairs as f64, guard: DISCRETE_EXACT_PAIRS as f64 });
            }
            // per pair and spin: bitmasks of sites where σ_i = ω and where τ_i = ω
            let mut masks = Vec::with_capacity(pairs * q);
            for s in 0..mu.len() {
                for t in 0..nu.len() {
                    for w in 0..q {
                        let bits = |c: &[u8]| c.iter().enumerate().filter(|(_, &x)| x as usize == w).fold(0u32, |m, (i, _)| m | 1 << i);
                        masks.push((bits(mu.config(s)), bits(nu.config(t))));
                    }
                }
            }
            let oracle = |plan: &[f64]| -> (f64, Vec<f64>) {
                let mut best = (f64::NEG_INFINITY, 0u32, 0usize, 1.0f64);
                for set in 0u32..(1 << n) {
                    for w in 0..q {
                        let (mut pos, mut neg) = (0.0, 0.0);
                        for p in 0..pairs {
                            let g = plan[p];
                            if g <= 0.0 {
                                continue;
                            }
                            let (pm, mm) = masks[p * q + w];
                            let c = (set & pm).count_ones() as f64 - (set & mm).count_ones() as f64;
                            if c > 0.0 {
                                pos += g * c;
                            } else {
                                neg -= g * c;
                            }
                        }
                        if pos > best.0 {
                            best = (pos, set, w, 1.0);
                        }
                        if neg > best.0 {
                            best = (neg, set, w, -1.0);
                        }
                    }
                }
                let (value, set, w, sign) = best;
                let coeffs = (0..pairs)
                    .map(|p| {
                        let (pm, mm) = masks[p * q + w];
                        let c = (set & pm).count_ones() as f64 - (set & mm).count_ones() as f64;
                        (sign * c).max(0.0) / n as f64
                    })
                    .collect();
                (value / n as f64, coeffs)
            };
            let res = lp::minimax_coupling(mu.probs(), nu.probs(), oracle)?;
            let lower = lower.max(res.lower.max(0.0)).min(res.upper);
            Ok(CutBounds { lower, upper: res.upper })
        }
        CutMode::Heuristic => {
            let (ma, mb) = (mu.marginals(), nu.marginals());
            let mut upper = product_coupling_bound(&ma, &mb).min(1.0);
            if mu.is_product(1e-12) && nu.is_product(1e-12) {
                let s: f64 = ma.iter().zip(&mb).map(|(x, y)| tv(x, y)).sum();
                upper = upper.min(s / n as f64);
            }
            if mu.len() * nu.len() <= 1024 {
                let cost: Vec<f64> = (0..mu.len() * nu.len())
                    .map(|p| hamming(mu.config(p / nu.len()), nu.config(p % nu.len())) as f64 / n as f64)
                    .collect();
                upper = upper.min(lp::transport(&cost, mu.probs(), nu.probs())?.0);
            }
            Ok(CutBounds { lower, upper: upper.max(lower) })
        }
    }
}

/// Discrete cut distance from `mu` to the product of its marginals. Exact when
/// the guards allow, otherwise the fast bounds.
pub fn extremality(mu: &Measure) -> Result<CutBounds> {
    let marginals = mu.marginals();
    let size: f64 = marginals.iter().map(|m| m.iter().filter(|&&x| x > 0.0).count() as f64).product();
    if size > PRODUCT_GUARD as f64 {
        // the product measure is too large to list; the product coupling still bounds it
        return Ok(CutBounds { lower: 0.0, upper: product_coupling_bound(&marginals, &marginals).min(1.0) });
    }
    let prod = mu.product_of_marginals()?;
    let exact = mu.len() * prod.len() <= DISCRETE_EXACT_PAIRS && mu.n() <= DISCRETE_EXACT_SITES;
    discrete_cut_distance(mu, &prod, if exact { CutMode::Exact } else { CutMode::Heuristic })
}

/// Bethe-state diagnostics for one event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetheStateReport {
    /// `D₁` between the standard messages and one BP step applied to them.
    pub bs1: f64,
    /// Mean over draws of the largest deviation between the exact local joint
    /// law and its message product form.
    pub bs2: f64,
    pub bs2_stderr: f64,
    /// The same restricted to draws with a single node (`ℓ + ℓ′ = 1`).
    pub bs2_single: f64,
    pub draws: usize,
    /// Draws skipped because the neighbourhood was too large to tabulate.
    pub skipped: usize,
    /// Mass of the event under the Boltzmann distribution.
    pub weight: f64,
    pub passes: bool,
}

/// Neighbourhood tables larger than this are skipped in BS2 draws.
pub const BS2_TABLE_GUARD: usize = 1 << 16;

/// Checks the two Bethe-state conditions on the event `part`.
///
/// BS2 draws `ℓ, ℓ′ ∈ {0,1,2}` (not both zero, capped by `1/ε`) and uniformly
/// random sets `I` of variables and `J` of constraints.
pub fn check_bethe_state<R: Rng + ?Sized>(
    g: &FactorGraph,
    part: Option<&Event>,
    eps: f64,
    sample_budget: usize,
    rng: &mut R,
) -> Result<BetheStateReport> {
    if !(eps > 0.0) {
        return Err(Error::OutOfRange("ε must be positive".into()));
    }
    let oracle = Oracle::default();
    let lz = oracle.log_z(g, None)?;
    let lz_part = oracle.log_partition_function(g, part)?.ok_or(Error::ZeroWeight)?;
    let std = oracle.standard_messages(g, part)?;
    let bs1 = bp_residual(&std, &bp_step(g, &std)?)?;
    let mu = oracle.boltzmann(g, part)?;
    let cap = ((1.0 / eps).floor() as usize).min(2);
    let mut classes = Vec::new();
    for l in 0..=cap {
        for l2 in 0..=cap {
            if l + l2 > 0 && l <= g.n() && l2 <= g.m() {
                classes.push((l, l2));
            }
        }
    }
    let mut all = Vec::new();
    let mut single = Vec::new();
    let mut skipped = 0;
    if !classes.is_empty() {
        for _ in 0..sample_budget {
            let (l, l2) = classes[rng.gen_range(0..classes.len())];
            let vars = index::sample(rng, g.n(), l).into_vec();
            let cons = index::sample(rng, g.m(), l2).into_vec();
            match bs2_draw(g, &std, &mu, &vars, &cons)? {
                Some(x) => {
                    all.push(x);
                    if l + l2 == 1 {
                        single.push(x);
                    }
                }
                None => skipped += 1,
            }
        }
    }
    let (bs2, bs2_stderr) = if all.is_empty() { (0.0, 0.0) } else { mean_stderr(&all) };
    let bs2_single = if single.is_empty() { 0.0 } else { mean_stderr(&single).0 };
    Ok(BetheStateReport {
        bs1,
        bs2,
        bs2_stderr,
        bs2_single,
        draws: all.len(),
        skipped,
        weight: (lz_part - lz).exp(),
        passes: bs1 < eps && bs2 < eps,
    })
}

fn bs2_draw(g: &FactorGraph, msgs: &MessageSet, mu: &Measure, vars: &[usize], cons: &[usize]) -> Result<Option<f64>> {
    let (q, k) = (g.q(), g.k());
    let mut u: Vec<usize> = vars.to_vec();
    for &a in cons {
        u.extend_from_slice(&g.constraint(a).vars);
    }
    for &v in vars {
        for a in g.neighbors(v) {
            u.extend_from_slice(&g.constraint(a).vars);
        }
    }
    u.sort_unstable();
    u.dedup();
    let size = match crate::numeric::checked_pow(q, u.len()) {
        Some(s) if s <= BS2_TABLE_GUARD => s,
        _ => return Ok(None),
    };
    let pos = |v: usize| u.binary_search(&v).expect("variable in neighbourhood");
    let joint = mu.joint(&u);
    // normalizers of the message product forms
    let mut buf = vec![0.0; q];
    let mut var_norm = Vec::with_capacity(vars.len());
    for &v in vars {
        let mut z = g.prior(v).to_vec();
        for &e in g.var_edges(v) {
            let a = e / k;
            let incoming: Vec<&[f64]> = (0..k).map(|j| msgs.v2f(a * k + j)).collect();
            g.constraint(a).weight.contract(e % k, &incoming, &mut buf);
            for (x, y) in z.iter_mut().zip(&buf) {
                *x *= y;
            }
        }
        let s: f64 = z.iter().sum();
        if !(s > 0.0) {
            return Err(Error::ZeroWeight);
        }
        var_norm.push(s);
    }
    let mut con_norm = Vec::with_capacity(cons.len());
    for &a in cons {
        let incoming: Vec<&[f64]> = (0..k).map(|j| msgs.v2f(a * k + j)).collect();
        con_norm.push(g.constraint(a).weight.expectation(&incoming));
    }
    let mut sigma = vec![0usize; u.len()];
    let mut tuple = vec![0usize; k];
    let mut worst: f64 = 0.0;
    for (idx, &p) in joint.iter().enumerate().take(size) {
        tuple_decode(idx, q, &mut sigma);
        let mut prod = 1.0;
        for (i, &v) in vars.iter().enumerate() {
            let mut f = g.prior(v)[sigma[pos(v)]];
            for &e in g.var_edges(v) {
                let (a, h) = (e / k, e % k);
                let c = g.constraint(a);
                for (j, slot) in tuple.iter_mut().enumerate() {
                    *slot = sigma[pos(c.vars[j])];
                    if j != h {
                        f *= msgs.v2f(a * k + j)[*slot];
                    }
                }
                f *= c.weight.get(&tuple);
            }
            prod *= f / var_norm[i];
        }
        for (i, &a) in cons.iter().enumerate() {
            let c = g.constraint(a);
            let mut f = 1.0;
            for (j, slot) in tuple.iter_mut().enumerate() {
                *slot = sigma[pos(c.vars[j])];
                f *= msgs.v2f(a * k + j)[*slot];
            }
            prod *= f * c.weight.get(&tuple) / con_norm[i];
        }
        worst = worst.max((p - prod).abs());
    }
    Ok(Some(worst))
}
