//! Belief Propagation: messages, the synchronous update, damped solver,
//! message-based marginals and the Bethe free energy.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::numeric::{checked_pow, normalize, tuple_decode, tv};

/// Messages `ν_{v→a}` and `ν_{a→v}` on every edge `e = a·k + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSet {
    q: usize,
    n: usize,
    edges: usize,
    v2f: Vec<f64>,
    f2v: Vec<f64>,
}

impl MessageSet {
    pub(crate) fn zeros(g: &FactorGraph) -> Self {
        let len = g.num_edges() * g.q();
        MessageSet { q: g.q(), n: g.n(), edges: g.num_edges(), v2f: vec![0.0; len], f2v: vec![0.0; len] }
    }

    pub fn uniform(g: &FactorGraph) -> Self {
        let mut m = Self::zeros(g);
        let u = 1.0 / g.q() as f64;
        m.v2f.iter_mut().for_each(|x| *x = u);
        m.f2v.iter_mut().for_each(|x| *x = u);
        m
    }

    /// Independent uniform-Dirichlet-like random messages (normalized uniforms).
    pub fn random<R: Rng + ?Sized>(g: &FactorGraph, rng: &mut R) -> Self {
        let mut m = Self::zeros(g);
        for x in m.v2f.iter_mut().chain(m.f2v.iter_mut()) {
            *x = rng.gen::<f64>() + 1e-3;
        }
        m.normalize_all();
        m
    }

    /// Builds a message set from flat arrays of length `edges·q`.
    pub fn from_raw(g: &FactorGraph, v2f: Vec<f64>, f2v: Vec<f64>) -> Result<Self> {
        let len = g.num_edges() * g.q();
        if v2f.len() != len || f2v.len() != len {
            return Err(Error::IndexMismatch);
        }
        let mut m = MessageSet { q: g.q(), n: g.n(), edges: g.num_edges(), v2f, f2v };
        m.normalize_all();
        Ok(m)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn num_edges(&self) -> usize {
        self.edges
    }

    /// `ν_{v→a}` on edge `e`.
    pub fn v2f(&self, e: usize) -> &[f64] {
        &self.v2f[e * self.q..(e + 1) * self.q]
    }

    /// `ν_{a→v}` on edge `e`.
    pub fn f2v(&self, e: usize) -> &[f64] {
        &self.f2v[e * self.q..(e + 1) * self.q]
    }

    pub fn v2f_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.v2f[e * self.q..(e + 1) * self.q]
    }

    pub fn f2v_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.f2v[e * self.q..(e + 1) * self.q]
    }

    pub(crate) fn normalize_all(&mut self) {
        for chunk in self.v2f.chunks_mut(self.q).chain(self.f2v.chunks_mut(self.q)) {
            normalize(chunk);
        }
    }

    /// Applies a permutation of the spin labels to every message.
    pub fn permute_spins(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for (src, dst) in [(&self.v2f, &mut out.v2f), (&self.f2v, &mut out.f2v)] {
            for (s, d) in src.chunks(self.q).zip(dst.chunks_mut(self.q)) {
                for (i, &p) in perm.iter().enumerate() {
                    d[p] = s[i];
                }
            }
        }
        out
    }
}

/// Outcome of [`bp_solve`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BpSolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub damping: f64,
}

/// Starting point for [`bp_solve`].
#[derive(Debug, Clone)]
pub enum Init {
    Uniform,
    Random(u64),
    Given(MessageSet),
}

fn contract_edge(g: &FactorGraph, msgs: &MessageSet, a: usize, j: usize, out: &mut [f64]) {
    let k = g.k();
    let c = g.constraint(a);
    let incoming: Vec<&[f64]> = (0..k).map(|i| msgs.v2f(a * k + i)).collect();
    c.weight.contract(j, &incoming, out);
}

/// One synchronous BP sweep.
pub fn bp_step(g: &FactorGraph, msgs: &MessageSet) -> Result<MessageSet> {
    if msgs.num_edges() != g.num_edges() || msgs.q() != g.q() {
        return Err(Error::IndexMismatch);
    }
    let (q, k) = (g.q(), g.k());
    let mut out = MessageSet::zeros(g);
    for e in 0..g.num_edges() {
        let (a, j) = (e / k, e % k);
        let slot = out.f2v_mut(e);
        contract_edge(g, msgs, a, j, slot);
        normalize(slot).ok_or(Error::Degenerate { constraint: a, slot: j })?;
    }
    for v in 0..g.n() {
        let edges = g.var_edges(v);
        for &e in edges {
            let mut m: Vec<f64> = g.prior(v).to_vec();
            for &f in edges {
                if f != e {
                    for s in 0..q {
                        m[s] *= msgs.f2v(f)[s];
                    }
                }
            }
            normalize(&mut m).ok_or(Error::Degenerate { constraint: e / k, slot: e % k })?;
            out.v2f_mut(e).copy_from_slice(&m);
        }
    }
    Ok(out)
}

/// The metric `D₁ = (1/n) Σ_e (TV(ν_{v→a}, ν′_{v→a}) + TV(ν_{a→v}, ν′_{a→v}))`.
pub fn bp_residual(a: &MessageSet, b: &MessageSet) -> Result<f64> {
    if a.q != b.q || a.edges != b.edges || a.n != b.n {
        return Err(Error::IndexMismatch);
    }
    if a.n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for e in 0..a.edges {
        total += tv(a.v2f(e), b.v2f(e)) + tv(a.f2v(e), b.f2v(e));
    }
    Ok(total / a.n as f64)
}

/// Damped synchronous iteration `ν ← (1−δ)·BP(ν) + δ·ν` until the residual
/// between successive iterates drops below `tol`.
pub fn bp_solve(
    g: &FactorGraph,
    init: Init,
    damping: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(MessageSet, BpSolveReport)> {
    if !(0.0..1.0).contains(&damping) || !(tol > 0.0) {
        return Err(Error::OutOfRange("damping must lie in [0, 1) and tol must be positive".into()));
    }
    let mut msgs = match init {
        Init::Uniform => MessageSet::uniform(g),
        Init::Random(seed) => MessageSet::random(g, &mut crate::numeric::rng_from_seed(seed)),
        Init::Given(m) => {
            if m.num_edges() != g.num_edges() || m.q() != g.q() {
                return Err(Error::IndexMismatch);
            }
            m
        }
    };
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = bp_step(g, &msgs)?;
        if damping > 0.0 {
            for (x, y) in next.v2f.iter_mut().zip(&msgs.v2f) {
                *x = (1.0 - damping) * *x + damping * y;
            }
            for (x, y) in next.f2v.iter_mut().zip(&msgs.f2v) {
                *x = (1.0 - damping) * *x + damping * y;
            }
        }
        residual = bp_residual(&msgs, &next)?;
        msgs = next;
        if residual < tol {
            return Ok((msgs, BpSolveReport { iterations: it, residual, converged: true, damping }));
        }
    }
    Ok((msgs, BpSolveReport { iterations: max_iter, residual, converged: false, damping }))
}

/// `p_v(σ) ∏_{a∈∂v} ν_{a→v}(σ)`, normalized.
pub fn marginal_from_messages(g: &FactorGraph, v: usize, msgs: &MessageSet) -> Result<Vec<f64>> {
    let mut m = g.prior(v).to_vec();
    for &e in g.var_edges(v) {
        for (x, y) in m.iter_mut().zip(msgs.f2v(e)) {
            *x *= y;
        }
    }
    let e = g.var_edges(v).first().copied().unwrap_or(0);
    normalize(&mut m).ok_or(Error::Degenerate { constraint: e / g.k().max(1), slot: e % g.k().max(1) })?;
    Ok(m)
}

/// Which neighbourhood a [`LocalDistribution`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Local {
    /// The variables of constraint `a`, in slot order.
    Constraint(usize),
    /// `v` followed, for every edge of `v` in clone order, by the other slots of that constraint.
    Variable(usize),
}

/// A joint law over a list of variables (entries may repeat on non-simple graphs).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDistribution {
    pub vars: Vec<usize>,
    /// Row-major over `vars`, first variable most significant.
    pub probs: Vec<f64>,
}

impl LocalDistribution {
    /// Marginal of the variable at position `pos`.
    pub fn marginal(&self, q: usize, pos: usize) -> Vec<f64> {
        let mut out = vec![0.0; q];
        let mut t = vec![0usize; self.vars.len()];
        for (i, &p) in self.probs.iter().enumerate() {
            tuple_decode(i, q, &mut t);
            out[t[pos]] += p;
        }
        out
    }
}

/// The message-based local distribution around a constraint or a variable.
pub fn local_distribution_from_messages(g: &FactorGraph, at: Local, msgs: &MessageSet) -> Result<LocalDistribution> {
    let (q, k) = (g.q(), g.k());
    match at {
        Local::Constraint(a) => {
            let c = g.constraint(a);
            let mut t = vec![0usize; k];
            let mut probs: Vec<f64> = c
                .weight
                .table()
                .iter()
                .enumerate()
                .map(|(idx, &w)| {
                    tuple_decode(idx, q, &mut t);
                    (0..k).fold(w, |acc, j| acc * msgs.v2f(a * k + j)[t[j]])
                })
                .collect();
            normalize(&mut probs).ok_or(Error::Degenerate { constraint: a, slot: 0 })?;
            Ok(LocalDistribution { vars: c.vars.clone(), probs })
        }
        Local::Variable(v) => {
            let edges = g.var_edges(v).to_vec();
            let mut vars = vec![v];
            for &e in &edges {
                let c = g.constraint(e / k);
                for j in 0..k {
                    if j != e % k {
                        vars.push(c.vars[j]);
                    }
                }
            }
            let size = checked_pow(q, vars.len())
                .filter(|&s| s <= 1 << 24)
                .ok_or(Error::SizeGuard { configs: (q as f64).powi(vars.len() as i32), guard: (1u64 << 24) as f64 })?;
            let mut t = vec![0usize; vars.len()];
            let mut local = vec![0usize; k];
            let mut probs = vec![0.0; size];
            for (idx, out) in probs.iter_mut().enumerate() {
                tuple_decode(idx, q, &mut t);
                let mut w = g.prior(v)[t[0]];
                let mut pos = 1;
                for &e in &edges {
                    if w == 0.0 {
                        break;
                    }
                    let (a, h) = (e / k, e % k);
                    for (j, slot) in local.iter_mut().enumerate() {
                        if j == h {
                            *slot = t[0];
                        } else {
                            *slot = t[pos];
                            w *= msgs.v2f(a * k + j)[t[pos]];
                            pos += 1;
                        }
                    }
                    w *= g.constraint(a).weight.get(&local);
                }
                *out = w;
            }
            normalize(&mut probs).ok_or(Error::Degenerate { constraint: edges.first().map_or(0, |e| e / k), slot: 0 })?;
            Ok(LocalDistribution { vars, probs })
        }
    }
}

/// Bethe free energy
/// `Σ_v ln Σ_σ p_v(σ) ∏_{e∋v} Σ_{τ_v=σ} ψ_a(τ) ∏_{w≠v} ν_{w→a}(τ_w) − (k−1) Σ_a ln Σ_τ ψ_a(τ) ∏_w ν_{w→a}(τ_w)`.
pub fn bethe_free_energy(g: &FactorGraph, msgs: &MessageSet) -> Result<f64> {
    let (q, k) = (g.q(), g.k());
    let mut total = 0.0;
    let mut buf = vec![0.0; q];
    for v in 0..g.n() {
        let mut z = g.prior(v).to_vec();
        for &e in g.var_edges(v) {
            contract_edge(g, msgs, e / k, e % k, &mut buf);
            for (x, y) in z.iter_mut().zip(&buf) {
                *x *= y;
            }
        }
        let s: f64 = z.iter().sum();
        if !(s > 0.0) {
            return Err(Error::ZeroWeight);
        }
        total += s.ln();
    }
    for a in 0..g.m() {
        let incoming: Vec<&[f64]> = (0..k).map(|j| msgs.v2f(a * k + j)).collect();
        let za = g.constraint(a).weight.expectation(&incoming);
        if !(za > 0.0) {
            return Err(Error::Degenerate { constraint: a, slot: 0 });
        }
        total -= (k as f64 - 1.0) * za.ln();
    }
    Ok(total)
}
