//! Spin models: spin set, prior, arity, degree and a distribution over weight
//! functions, plus the POS condition checker.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::numeric::{self, fork, tuple_decode, tuple_index};

/// A weight function `Ω^k → [0, 1]` stored as a dense table.
///
/// Tuples are indexed with the first coordinate most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFunction {
    q: usize,
    k: usize,
    table: Arc<[f64]>,
}

impl WeightFunction {
    /// Table with entries in `(0, 1]`.
    pub fn new(q: usize, k: usize, table: Vec<f64>) -> Result<Self> {
        let w = Self::with_zeros(q, k, table)?;
        if w.table.iter().any(|&x| x <= 0.0) {
            return Err(Error::InvalidModel("weight table entries must be positive".into()));
        }
        Ok(w)
    }

    /// Table with entries in `[0, 1]`; only the hard-core constraint needs zeros.
    pub fn with_zeros(q: usize, k: usize, table: Vec<f64>) -> Result<Self> {
        let len = numeric::checked_pow(q, k).ok_or_else(|| Error::InvalidModel("table too large".into()))?;
        if q < 2 || k < 1 || table.len() != len {
            return Err(Error::InvalidModel(format!(
                "table of length {} does not match q={q}, k={k}",
                table.len()
            )));
        }
        if table.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidModel("weight table entries must lie in [0, 1]".into()));
        }
        Ok(WeightFunction { q, k, table: table.into() })
    }

    pub fn constant(q: usize, k: usize, value: f64) -> Result<Self> {
        Self::new(q, k, vec![value; q.pow(k as u32)])
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn get(&self, tuple: &[usize]) -> f64 {
        self.table[tuple_index(tuple, self.q)]
    }

    pub fn has_zero(&self) -> bool {
        self.table.iter().any(|&x| x == 0.0)
    }

    /// The table with coordinates permuted: `new(τ) = old(τ∘perm⁻¹)`, i.e. slot `i`
    /// of the new function reads slot `perm[i]` of the old one.
    pub fn permuted(&self, perm: &[usize]) -> WeightFunction {
        let mut t = vec![0usize; self.k];
        let mut src = vec![0usize; self.k];
        let table = (0..self.table.len())
            .map(|idx| {
                tuple_decode(idx, self.q, &mut t);
                for (i, &p) in perm.iter().enumerate() {
                    src[p] = t[i];
                }
                self.table[tuple_index(&src, self.q)]
            })
            .collect::<Vec<_>>();
        WeightFunction { q: self.q, k: self.k, table: table.into() }
    }

    /// `Σ_τ ψ(τ) ∏_i msgs[i](τ_i)`.
    pub fn expectation(&self, msgs: &[&[f64]]) -> f64 {
        let mut t = vec![0usize; self.k];
        let mut total = 0.0;
        for (idx, &w) in self.table.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            tuple_decode(idx, self.q, &mut t);
            let mut prod = w;
            for (i, &s) in t.iter().enumerate() {
                prod *= msgs[i][s];
            }
            total += prod;
        }
        total
    }

    /// Writes `out[σ] = Σ_{τ: τ_h = σ} ψ(τ) ∏_{i≠h} msgs[i](τ_i)`; `msgs[h]` is ignored.
    pub fn contract(&self, h: usize, msgs: &[&[f64]], out: &mut [f64]) {
        let mut t = vec![0usize; self.k];
        out.iter_mut().for_each(|x| *x = 0.0);
        for (idx, &w) in self.table.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            tuple_decode(idx, self.q, &mut t);
            let mut prod = w;
            for (i, &s) in t.iter().enumerate() {
                if i != h {
                    prod *= msgs[i][s];
                }
            }
            out[t[h]] += prod;
        }
    }
}

/// A custom weight table with its selection probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomTable {
    pub prob: f64,
    pub table: Vec<f64>,
}

/// Named weight-function families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    KSpin { beta: f64 },
    Potts { beta: f64 },
    KSat { beta: f64 },
    HardcoreSoft { beta: f64, lambda: f64 },
    Hardcore { lambda: f64 },
    Custom { tables: Vec<CustomTable>, floor: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::KSpin { .. } => "kspin",
            Family::Potts { .. } => "potts",
            Family::KSat { .. } => "ksat",
            Family::HardcoreSoft { .. } => "hardcore_soft",
            Family::Hardcore { .. } => "hardcore",
            Family::Custom { .. } => "custom",
        }
    }
}

pub const DEFAULT_FLOOR: f64 = 1e-6;

/// A spin model `(Ω, p, k, d, P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    q: usize,
    k: usize,
    d: usize,
    prior: Vec<f64>,
    family: Family,
    fixed: Option<WeightFunction>,
}

fn spin_sign(s: usize) -> f64 {
    if s == 0 {
        1.0
    } else {
        -1.0
    }
}

impl Model {
    fn build(q: usize, k: usize, d: usize, prior: Vec<f64>, family: Family) -> Result<Model> {
        if q < 2 {
            return Err(Error::InvalidModel(format!("q = {q} < 2")));
        }
        if k < 2 {
            return Err(Error::InvalidModel(format!("k = {k} < 2")));
        }
        if d < 3 {
            return Err(Error::InvalidModel(format!("d = {d} < 3")));
        }
        if prior.len() != q || prior.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidModel("prior must have q positive entries".into()));
        }
        let fixed = match &family {
            Family::Potts { beta } => {
                check_param("beta", *beta)?;
                let table = (0..q * q)
                    .map(|i| if i / q == i % q { (-beta).exp() } else { 1.0 })
                    .collect();
                Some(WeightFunction::new(q, 2, table)?)
            }
            Family::HardcoreSoft { beta, lambda } => {
                check_param("beta", *beta)?;
                check_param("lambda", *lambda)?;
                Some(WeightFunction::new(2, 2, vec![1.0, 1.0, 1.0, (-beta).exp()])?)
            }
            Family::Hardcore { lambda } => {
                check_param("lambda", *lambda)?;
                Some(WeightFunction::with_zeros(2, 2, vec![1.0, 1.0, 1.0, 0.0])?)
            }
            Family::KSpin { beta } | Family::KSat { beta } => {
                check_param("beta", *beta)?;
                None
            }
            Family::Custom { tables, floor } => {
                if tables.is_empty() {
                    return Err(Error::InvalidModel("custom family needs at least one table".into()));
                }
                for t in tables {
                    if !(t.prob > 0.0) {
                        return Err(Error::InvalidModel("custom table probabilities must be positive".into()));
                    }
                    WeightFunction::new(q, k, t.table.clone())?;
                    if t.table.iter().any(|&x| x < *floor) {
                        return Err(Error::InvalidModel(format!(
                            "custom table entry below the floor {floor}"
                        )));
                    }
                }
                None
            }
        };
        Ok(Model { q, k, d, prior, family, fixed })
    }

    /// k-spin glass with Gaussian couplings. The prior is the counting measure `p ≡ 1`.
    pub fn kspin(k: usize, d: usize, beta: f64) -> Result<Model> {
        Self::build(2, k, d, vec![1.0, 1.0], Family::KSpin { beta })
    }

    /// Antiferromagnetic Potts model `ψ(σ,τ) = exp(−β·1{σ=τ})` with uniform prior.
    pub fn potts(q: usize, d: usize, beta: f64) -> Result<Model> {
        Self::build(q, 2, d, vec![1.0 / q as f64; q], Family::Potts { beta })
    }

    /// Regular k-SAT with uniformly random clauses and uniform prior.
    pub fn ksat(k: usize, d: usize, beta: f64) -> Result<Model> {
        Self::build(2, k, d, vec![0.5, 0.5], Family::KSat { beta })
    }

    /// Soft-core model with fugacity `lambda` and softness `beta`.
    pub fn hardcore_soft(d: usize, beta: f64, lambda: f64) -> Result<Model> {
        let z = 1.0 + lambda;
        Self::build(2, 2, d, vec![1.0 / z, lambda / z], Family::HardcoreSoft { beta, lambda })
    }

    /// Hard-core model with fugacity `lambda`.
    pub fn hardcore(d: usize, lambda: f64) -> Result<Model> {
        let z = 1.0 + lambda;
        Self::build(2, 2, d, vec![1.0 / z, lambda / z], Family::Hardcore { lambda })
    }

    pub fn custom(
        q: usize,
        k: usize,
        d: usize,
        prior: Vec<f64>,
        tables: Vec<CustomTable>,
        floor: f64,
    ) -> Result<Model> {
        Self::build(q, k, d, prior, Family::Custom { tables, floor })
    }

    /// Same model with a different prior weight vector.
    pub fn with_prior(&self, prior: Vec<f64>) -> Result<Model> {
        Self::build(self.q, self.k, self.d, prior, self.family.clone())
    }

    /// Same model with a different degree.
    pub fn with_degree(&self, d: usize) -> Result<Model> {
        Self::build(self.q, self.k, d, self.prior.clone(), self.family.clone())
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Draws one weight function from the model's distribution.
    pub fn sample_weight_function<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightFunction {
        if let Some(w) = &self.fixed {
            return w.clone();
        }
        match &self.family {
            Family::KSpin { beta } => {
                let j = numeric::standard_normal(rng);
                kspin_table(self.k, (beta * j).tanh())
            }
            Family::KSat { beta } => {
                let chi: Vec<usize> = (0..self.k).map(|_| rng.gen_range(0..2)).collect();
                ksat_table(self.k, *beta, &chi)
            }
            Family::Custom { tables, .. } => {
                let probs: Vec<f64> = tables.iter().map(|t| t.prob).collect();
                let t = &tables[numeric::categorical(rng, &probs)];
                let base = WeightFunction { q: self.q, k: self.k, table: t.table.clone().into() };
                let mut perm: Vec<usize> = (0..self.k).collect();
                perm.shuffle(rng);
                base.permuted(&perm)
            }
            _ => unreachable!("fixed families are cached"),
        }
    }

    /// Weighted support used to average over ψ in the POS check.
    ///
    /// Finite families are enumerated exactly. The Gaussian k-spin coupling is
    /// sampled in antithetic pairs `±J` so that odd moments of `tanh(βJ)` vanish
    /// exactly, as they do under the true distribution.
    pub fn psi_quadrature<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Vec<(f64, WeightFunction)> {
        if let Some(w) = &self.fixed {
            return vec![(1.0, w.clone())];
        }
        match &self.family {
            Family::KSpin { beta } => {
                let n = samples.max(1);
                let mut out = Vec::with_capacity(2 * n);
                for _ in 0..n {
                    let t = (beta * numeric::standard_normal(rng)).tanh();
                    out.push((0.5 / n as f64, kspin_table(self.k, t)));
                    out.push((0.5 / n as f64, kspin_table(self.k, -t)));
                }
                out
            }
            Family::KSat { beta } => {
                let count = 1usize << self.k;
                let mut chi = vec![0usize; self.k];
                (0..count)
                    .map(|c| {
                        tuple_decode(c, 2, &mut chi);
                        (1.0 / count as f64, ksat_table(self.k, *beta, &chi))
                    })
                    .collect()
            }
            Family::Custom { tables, .. } => {
                let total: f64 = tables.iter().map(|t| t.prob).sum();
                let perms = permutations(self.k);
                let mut out = Vec::new();
                for t in tables {
                    let base = WeightFunction { q: self.q, k: self.k, table: t.table.clone().into() };
                    for p in &perms {
                        out.push((t.prob / total / perms.len() as f64, base.permuted(p)));
                    }
                }
                out
            }
            _ => unreachable!("fixed families are cached"),
        }
    }

    pub fn to_spec(&self) -> ModelSpec {
        let mut params = Params::default();
        match &self.family {
            Family::KSpin { beta } | Family::Potts { beta } | Family::KSat { beta } => params.beta = Some(*beta),
            Family::HardcoreSoft { beta, lambda } => {
                params.beta = Some(*beta);
                params.lambda = Some(*lambda);
            }
            Family::Hardcore { lambda } => params.lambda = Some(*lambda),
            Family::Custom { tables, floor } => {
                params.tables = Some(tables.clone());
                params.floor = Some(*floor);
            }
        }
        ModelSpec {
            model: self.family.name().to_string(),
            q: self.q,
            k: self.k,
            d: self.d,
            params,
            prior: Some(self.prior.clone()),
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Model> {
        let beta = || spec.params.beta.ok_or_else(|| Error::InvalidModel("missing params.beta".into()));
        let lambda = || spec.params.lambda.ok_or_else(|| Error::InvalidModel("missing params.lambda".into()));
        let model = match spec.model.as_str() {
            "kspin" => Model::kspin(spec.k, spec.d, beta()?)?,
            "potts" => {
                if spec.k != 2 {
                    return Err(Error::InvalidModel("potts requires k = 2".into()));
                }
                Model::potts(spec.q, spec.d, beta()?)?
            }
            "ksat" => Model::ksat(spec.k, spec.d, beta()?)?,
            "hardcore_soft" => Model::hardcore_soft(spec.d, beta()?, lambda()?)?,
            "hardcore" => Model::hardcore(spec.d, lambda()?)?,
            "custom" => {
                let tables = spec
                    .params
                    .tables
                    .clone()
                    .ok_or_else(|| Error::InvalidModel("missing params.tables".into()))?;
                let prior = spec.prior.clone().unwrap_or_else(|| vec![1.0 / spec.q as f64; spec.q]);
                return Model::custom(spec.q, spec.k, spec.d, prior, tables, spec.params.floor.unwrap_or(DEFAULT_FLOOR));
            }
            other => return Err(Error::InvalidModel(format!("unknown model '{other}'"))),
        };
        if model.q != spec.q || model.k != spec.k {
            return Err(Error::InvalidModel(format!(
                "model '{}' fixes q={}, k={}",
                spec.model, model.q, model.k
            )));
        }
        match &spec.prior {
            Some(p) => model.with_prior(p.clone()),
            None => Ok(model),
        }
    }
}

fn check_param(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be finite and nonnegative")))
    }
}

fn kspin_table(k: usize, t: f64) -> WeightFunction {
    let mut tuple = vec![0usize; k];
    let table = (0..1usize << k)
        .map(|idx| {
            tuple_decode(idx, 2, &mut tuple);
            let s: f64 = tuple.iter().map(|&x| spin_sign(x)).product();
            0.5 * (1.0 + t * s)
        })
        .collect::<Vec<f64>>();
    WeightFunction { q: 2, k, table: table.into() }
}

/// Clause table: `(1 − tanh β)/2` at the violating assignment `χ`, `(1 + tanh β)/2` elsewhere.
fn ksat_table(k: usize, beta: f64, chi: &[usize]) -> WeightFunction {
    let t = beta.tanh();
    let bad = tuple_index(chi, 2);
    let table: Vec<f64> = (0..1usize << k)
        .map(|idx| if idx == bad { 0.5 * (1.0 - t) } else { 0.5 * (1.0 + t) })
        .collect();
    WeightFunction { q: 2, k, table: table.into() }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; k], &mut out);
    out
}

pub(crate) fn all_permutations(k: usize) -> Vec<Vec<usize>> {
    permutations(k)
}

/// Serializable model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: String,
    pub q: usize,
    pub k: usize,
    pub d: usize,
    #[serde(default)]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tables: Option<Vec<CustomTable>>,
}

impl ModelSpec {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model spec serializes")
    }

    pub fn from_toml(s: &str) -> Result<ModelSpec> {
        toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Outcome of a POS fuzzing run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosReport {
    pub trials: usize,
    pub ell_max: usize,
    pub worst_violation: f64,
    pub per_ell_min: Vec<f64>,
    pub worst_trial: usize,
}

/// Parameters for [`check_pos`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosConfig {
    pub ell_max: usize,
    pub trials: usize,
    pub rows: usize,
    pub cols: usize,
    /// Number of ψ draws (antithetic pairs for k-spin); unused for finite families.
    pub psi_samples: usize,
}

impl Default for PosConfig {
    fn default() -> Self {
        PosConfig { ell_max: 6, trials: 1000, rows: 3, cols: 3, psi_samples: 8 }
    }
}

/// POS left-minus-right values for `ℓ = 1..=ell_max` at the kernel pair `(mu, mu2)`.
///
/// The expectation over columns and the `s`-integral are exact for
/// piecewise-constant kernels; the expectation over ψ uses `quad`.
pub fn pos_values(
    model: &Model,
    quad: &[(f64, WeightFunction)],
    mu: &Kernel,
    mu2: &Kernel,
    ell_max: usize,
) -> Result<Vec<f64>> {
    let (q, k) = (model.q, model.k);
    if mu.q() != q || mu2.q() != q {
        return Err(Error::InvalidModel("kernel spin count differs from the model".into()));
    }
    let (a, b) = Kernel::align(mu, mu2);
    let cols = a.cols();
    let rows = a.rows();
    let tuples = cols.pow(k as u32);
    let qk = q.pow(k as u32);
    // term 0: all μ; term 1: all μ′; term 2+h: μ at slot h, μ′ elsewhere.
    let nterms = 2 + k;
    let mut sums = vec![vec![0.0; ell_max]; nterms];
    let mut xs = vec![0usize; k];
    let mut sig = vec![0usize; k];
    let mut joint = vec![0.0; qk];
    for xi in 0..tuples {
        tuple_decode(xi, cols, &mut xs);
        for term in 0..nterms {
            joint.iter_mut().for_each(|x| *x = 0.0);
            for r in 0..rows {
                let w = a.weight(r);
                for (si, j) in joint.iter_mut().enumerate() {
                    tuple_decode(si, q, &mut sig);
                    let mut prod = w;
                    for i in 0..k {
                        let use_a = match term {
                            0 => true,
                            1 => false,
                            _ => i == term - 2,
                        };
                        let cell = if use_a { a.cell(r, xs[i]) } else { b.cell(r, xs[i]) };
                        prod *= cell[sig[i]];
                        if prod == 0.0 {
                            break;
                        }
                    }
                    *j += prod;
                }
            }
            for (pw, psi) in quad {
                let v: f64 = psi.table().iter().zip(&joint).map(|(x, y)| x * y).sum();
                let base = 1.0 - v;
                let mut pow = 1.0;
                for s in sums[term].iter_mut() {
                    pow *= base;
                    *s += pw * pow;
                }
            }
        }
    }
    let norm = tuples as f64;
    Ok((0..ell_max)
        .map(|l| {
            let mut v = sums[0][l] + (k as f64 - 1.0) * sums[1][l];
            for h in 0..k {
                v -= sums[2 + h][l];
            }
            v / norm
        })
        .collect())
}

/// Fuzzes the POS condition over random kernel pairs.
pub fn check_pos<R: Rng + ?Sized>(model: &Model, cfg: &PosConfig, rng: &mut R) -> Result<PosReport> {
    if cfg.ell_max == 0 || cfg.trials == 0 || cfg.rows == 0 || cfg.cols == 0 {
        return Err(Error::OutOfRange("ell_max, trials, rows and cols must be positive".into()));
    }
    let seeds: Vec<u64> = (0..cfg.trials).map(|_| rng.gen()).collect();
    let results: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .map(|&s| {
            let mut r = numeric::rng_from_seed(s);
            let (a, b) = Kernel::random_pair(model.q, cfg.rows, cfg.cols, &mut r);
            let quad = model.psi_quadrature(cfg.psi_samples, &mut r);
            pos_values(model, &quad, &a, &b, cfg.ell_max)
        })
        .collect();
    let mut per_ell_min = vec![f64::INFINITY; cfg.ell_max];
    let mut worst = f64::INFINITY;
    let mut worst_trial = 0;
    for (t, res) in results.into_iter().enumerate() {
        let vals = res?;
        for (l, &v) in vals.iter().enumerate() {
            per_ell_min[l] = per_ell_min[l].min(v);
            if v < worst {
                worst = v;
                worst_trial = t;
            }
        }
    }
    Ok(PosReport { trials: cfg.trials, ell_max: cfg.ell_max, worst_violation: worst, per_ell_min, worst_trial })
}

/// A kernel pair at which POS fails, with its most negative value.
#[derive(Debug, Clone)]
pub struct PosWitness {
    pub value: f64,
    pub ell: usize,
    pub mu: Kernel,
    pub mu2: Kernel,
}

/// Searches point-mass kernels with at most two rows and two columns for the
/// most negative POS value. Returns `None` if every value is nonnegative.
pub fn find_pos_witness<R: Rng + ?Sized>(
    model: &Model,
    ell_max: usize,
    psi_samples: usize,
    rng: &mut R,
) -> Result<Option<PosWitness>> {
    let q = model.q;
    let mut candidates = Vec::new();
    for rows in 1..=2usize {
        for cols in 1..=2usize {
            let cells = rows * cols;
            for code in 0..q.pow(cells as u32) {
                let mut spins = vec![0usize; cells];
                tuple_decode(code, q, &mut spins);
                let rows_vec = (0..rows)
                    .map(|r| {
                        let row = (0..cols)
                            .map(|c| {
                                let mut cell = vec![0.0; q];
                                cell[spins[r * cols + c]] = 1.0;
                                cell
                            })
                            .collect();
                        (1.0 / rows as f64, row)
                    })
                    .collect();
                candidates.push(Kernel::new(q, cols, rows_vec)?);
            }
        }
    }
    let mut r = fork(rng);
    let quad = model.psi_quadrature(psi_samples, &mut r);
    let mut best: Option<PosWitness> = None;
    for a in &candidates {
        for b in &candidates {
            let vals = pos_values(model, &quad, a, b, ell_max)?;
            for (l, &v) in vals.iter().enumerate() {
                if v < 0.0 && best.as_ref().map_or(true, |w| v < w.value) {
                    best = Some(PosWitness { value: v, ell: l + 1, mu: a.clone(), mu2: b.clone() });
                }
            }
        }
    }
    Ok(best)
}
