//! Piecewise-constant kernels `[0,1]² → P(Ω)`: weighted rows ("states") times
//! equal-width columns ("sites"). Cut distance, joins and the measure embedding.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp;
use crate::measure::Measure;
use crate::model::{all_permutations, Model, WeightFunction};
use crate::numeric::{fork, normalize, tuple_decode};

/// Lower and upper bounds on a distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutBounds {
    pub lower: f64,
    pub upper: f64,
}

impl CutBounds {
    pub fn zero() -> Self {
        CutBounds { lower: 0.0, upper: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutMode {
    Exact,
    Heuristic,
}

/// Largest row count and column count accepted by [`CutMode::Exact`].
pub const EXACT_ROWS: usize = 6;
pub const EXACT_COLS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    q: usize,
    cols: usize,
    weights: Vec<f64>,
    // row-major: row, column, spin
    cells: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from `(weight, cells)` rows. Weights must be positive and
    /// are normalized; each cell must be a distribution on `q` spins.
    pub fn new(q: usize, cols: usize, rows: Vec<(f64, Vec<Vec<f64>>)>) -> Result<Kernel> {
        if q < 2 || cols == 0 || rows.is_empty() {
            return Err(Error::OutOfRange("kernel needs q ≥ 2, at least one row and one column".into()));
        }
        let mut weights = Vec::with_capacity(rows.len());
        let mut cells = Vec::with_capacity(rows.len() * cols * q);
        for (w, row) in rows {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::OutOfRange("row weights must be positive".into()));
            }
            if row.len() != cols {
                return Err(Error::OutOfRange(format!("row has {} cells, expected {cols}", row.len())));
            }
            weights.push(w);
            for mut cell in row {
                check_cell(&cell, q)?;
                renormalize(&mut cell);
                cells.extend_from_slice(&cell);
            }
        }
        renormalize(&mut weights);
        Ok(Kernel { q, cols, weights, cells })
    }

    /// A one-row kernel.
    pub fn one_row(q: usize, cells: Vec<Vec<f64>>) -> Result<Kernel> {
        let cols = cells.len();
        Kernel::new(q, cols, vec![(1.0, cells)])
    }

    /// The one-row kernel with uniform cells.
    pub fn uniform(q: usize, cols: usize) -> Kernel {
        Kernel { q, cols, weights: vec![1.0], cells: vec![1.0 / q as f64; cols * q] }
    }

    /// Random kernel: cells are point masses or uniform-random distributions with
    /// equal probability; weights are bounded away from zero.
    pub fn random<R: Rng + ?Sized>(q: usize, rows: usize, cols: usize, rng: &mut R) -> Kernel {
        let mut weights: Vec<f64> = (0..rows).map(|_| 0.05 + rng.gen::<f64>()).collect();
        normalize(&mut weights);
        let cells = random_cells(q, rows, cols, rng);
        Kernel { q, cols, weights, cells }
    }

    /// Two random kernels sharing their row weights.
    pub fn random_pair<R: Rng + ?Sized>(q: usize, rows: usize, cols: usize, rng: &mut R) -> (Kernel, Kernel) {
        let a = Kernel::random(q, rows, cols, rng);
        let b = Kernel { cells: random_cells(q, rows, cols, rng), ..a.clone() };
        (a, b)
    }

    /// Embedding of a discrete measure: one row per configuration (in lexicographic
    /// order) weighted by its probability, one point-mass column per site.
    pub fn from_measure(mu: &Measure) -> Result<Kernel> {
        if mu.is_empty() || mu.n() == 0 {
            return Err(Error::OutOfRange("measure has empty support".into()));
        }
        let (q, n) = (mu.q(), mu.n());
        let mut cells = vec![0.0; mu.len() * n * q];
        for i in 0..mu.len() {
            for (v, &s) in mu.config(i).iter().enumerate() {
                cells[(i * n + v) * q + s as usize] = 1.0;
            }
        }
        Ok(Kernel { q, cols: n, weights: mu.probs().to_vec(), cells })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, r: usize) -> f64 {
        self.weights[r]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cell(&self, r: usize, c: usize) -> &[f64] {
        let start = (r * self.cols + c) * self.q;
        &self.cells[start..start + self.q]
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.cells[r * self.cols * self.q..(r + 1) * self.cols * self.q]
    }

    /// Identical rows merged and rows sorted by their cells.
    pub fn canonical(&self) -> Kernel {
        let mut order: Vec<usize> = (0..self.rows()).collect();
        order.sort_by(|&a, &b| cmp_rows(self.row(a), self.row(b)));
        let mut weights: Vec<f64> = Vec::new();
        let mut cells: Vec<f64> = Vec::new();
        let mut last: Option<usize> = None;
        for r in order {
            match last {
                Some(l) if self.row(l) == self.row(r) => *weights.last_mut().expect("nonempty") += self.weights[r],
                _ => {
                    weights.push(self.weights[r]);
                    cells.extend_from_slice(self.row(r));
                    last = Some(r);
                }
            }
        }
        Kernel { q: self.q, cols: self.cols, weights, cells }
    }

    /// Each column split into `factor` identical columns.
    pub fn refine_columns(&self, factor: usize) -> Kernel {
        let mut cells = Vec::with_capacity(self.cells.len() * factor);
        for r in 0..self.rows() {
            for c in 0..self.cols {
                for _ in 0..factor {
                    cells.extend_from_slice(self.cell(r, c));
                }
            }
        }
        Kernel { q: self.q, cols: self.cols * factor, weights: self.weights.clone(), cells }
    }

    /// Puts two kernels on a common grid: columns refined to the least common
    /// multiple, rows split along the common refinement of the two weight
    /// partitions of `[0,1]`. The results share their row weights.
    pub fn align(a: &Kernel, b: &Kernel) -> (Kernel, Kernel) {
        let l = lcm(a.cols, b.cols);
        let (a, b) = (a.refine_columns(l / a.cols), b.refine_columns(l / b.cols));
        let (mut i, mut j) = (0, 0);
        let (mut ra, mut rb) = (a.weights[0], b.weights[0]);
        let mut weights = Vec::new();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        loop {
            let w = ra.min(rb);
            if w > 1e-15 {
                weights.push(w);
                ca.extend_from_slice(a.row(i));
                cb.extend_from_slice(b.row(j));
            }
            ra -= w;
            rb -= w;
            if ra <= 1e-15 {
                i += 1;
                if i == a.rows() {
                    break;
                }
                ra += a.weights[i];
            }
            if rb <= 1e-15 {
                j += 1;
                if j == b.rows() {
                    break;
                }
                rb += b.weights[j];
            }
        }
        if weights.is_empty() {
            weights.push(1.0);
            ca.extend_from_slice(a.row(0));
            cb.extend_from_slice(b.row(0));
        }
        normalize(&mut weights);
        (
            Kernel { q: a.q, cols: l, weights: weights.clone(), cells: ca },
            Kernel { q: b.q, cols: l, weights, cells: cb },
        )
    }

    /// The kernel with row weights multiplied by `exp(log_z)`; rows with `None`
    /// (zero factor) are dropped.
    fn reweight(&self, log_z: &[Option<f64>]) -> Result<Kernel> {
        let max = log_z.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateJoin);
        }
        let mut weights = Vec::new();
        let mut cells = Vec::new();
        for (r, lz) in log_z.iter().enumerate() {
            if let Some(lz) = lz {
                let w = self.weights[r] * (lz - max).exp();
                if w > 0.0 {
                    weights.push(w);
                    cells.extend_from_slice(self.row(r));
                }
            }
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(Error::DegenerateJoin);
        }
        renormalize(&mut weights);
        Ok(Kernel { q: self.q, cols: self.cols, weights, cells })
    }

    pub fn to_doc(&self) -> KernelDoc {
        KernelDoc {
            q: self.q,
            rows: (0..self.rows())
                .map(|r| RowDoc { w: self.weights[r], cells: (0..self.cols).map(|c| self.cell(r, c).to_vec()).collect() })
                .collect(),
        }
    }

    pub fn from_doc(doc: &KernelDoc) -> Result<Kernel> {
        let cols = doc.rows.first().map_or(0, |r| r.cells.len());
        Kernel::new(doc.q, cols, doc.rows.iter().map(|r| (r.w, r.cells.clone())).collect())
    }
}

fn check_cell(cell: &[f64], q: usize) -> Result<()> {
    let s: f64 = cell.iter().sum();
    if cell.len() != q || cell.iter().any(|&x| !(x >= 0.0)) || (s - 1.0).abs() > 1e-9 {
        return Err(Error::OutOfRange("kernel cell is not a distribution".into()));
    }
    Ok(())
}

// Leaves vectors that already sum to one (within rounding) untouched, so that
// serialized kernels read back bit for bit.
fn renormalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        normalize(v);
    }
}

fn random_cells<R: Rng + ?Sized>(q: usize, rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let mut cells = vec![0.0; rows * cols * q];
    for cell in cells.chunks_mut(q) {
        if rng.gen_bool(0.5) {
            cell[rng.gen_range(0..q)] = 1.0;
        } else {
            cell.iter_mut().for_each(|x| *x = rng.gen::<f64>());
            normalize(cell);
        }
    }
    cells
}

fn cmp_rows(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Serialized kernel: `{q, rows: [{w, cells: [[p_ω]]}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDoc {
    pub q: usize,
    pub rows: Vec<RowDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDoc {
    pub w: f64,
    pub cells: Vec<Vec<f64>>,
}

/// An empirical distribution over kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEnsemble {
    members: Vec<(f64, Kernel)>,
}

impl KernelEnsemble {
    pub fn new(members: Vec<(f64, Kernel)>) -> Result<Self> {
        if members.is_empty() || members.iter().any(|(p, _)| !(*p > 0.0)) {
            return Err(Error::OutOfRange("ensemble needs positive probabilities".into()));
        }
        let total: f64 = members.iter().map(|(p, _)| p).sum();
        Ok(KernelEnsemble { members: members.into_iter().map(|(p, k)| (p / total, k)).collect() })
    }

    pub fn single(k: Kernel) -> Self {
        KernelEnsemble { members: vec![(1.0, k)] }
    }

    pub fn members(&self) -> &[(f64, Kernel)] {
        &self.members
    }
}

/// `max_ω |∫∫ κ₁(ω) − ∫∫ κ₂(ω)|`, valid for every alignment.
fn global_lower(a: &Kernel, b: &Kernel) -> f64 {
    let mass = |k: &Kernel| {
        let mut m = vec![0.0; k.q];
        for r in 0..k.rows() {
            for c in 0..k.cols {
                for (x, y) in m.iter_mut().zip(k.cell(r, c)) {
                    *x += k.weights[r] * y / k.cols as f64;
                }
            }
        }
        m
    };
    let (ma, mb) = (mass(a), mass(b));
    ma.iter().zip(&mb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Differences `D[i][j][c][ω] = κ₁(i, c, ω) − κ₂(j, perm[c], ω)` scaled by `1/C`.
struct Diff {
    ra: usize,
    rb: usize,
    cols: usize,
    q: usize,
    d: Vec<f64>,
}

impl Diff {
    fn new(a: &Kernel, b: &Kernel, perm: &[usize]) -> Diff {
        let (ra, rb, cols, q) = (a.rows(), b.rows(), a.cols, a.q);
        let mut d = Vec::with_capacity(ra * rb * cols * q);
        for i in 0..ra {
            for j in 0..rb {
                for (c, &pc) in perm.iter().enumerate() {
                    for w in 0..q {
                        d.push((a.cell(i, c)[w] - b.cell(j, pc)[w]) / cols as f64);
                    }
                }
            }
        }
        Diff { ra, rb, cols, q, d }
    }

    fn at(&self, i: usize, j: usize, c: usize, w: usize) -> f64 {
        self.d[((i * self.rb + j) * self.cols + c) * self.q + w]
    }

    /// Exact `sup_{S,X,ω}` at the coupling `plan`, with a maximizing coefficient vector.
    fn rectangle_sup(&self, plan: &[f64]) -> (f64, Vec<f64>) {
        let pairs = self.ra * self.rb;
        let subsets = 1usize << self.cols;
        // sums[pair][subset] for the current ω
        let mut sums = vec![0.0; pairs * subsets];
        let mut best = (f64::NEG_INFINITY, 0usize, 0usize, 1.0f64);
        for w in 0..self.q {
            for p in 0..pairs {
                let (i, j) = (p / self.rb, p % self.rb);
                let base = p * subsets;
                for s in 1..subsets {
                    let low = s.trailing_zeros() as usize;
                    sums[base + s] = sums[base + (s & (s - 1))] + self.at(i, j, low, w);
                }
            }
            for s in 0..subsets {
                for sign in [1.0, -1.0] {
                    let v: f64 = (0..pairs).map(|p| plan[p] * (sign * sums[p * subsets + s]).max(0.0)).sum();
                    if v > best.0 {
                        best = (v, w, s, sign);
                    }
                }
            }
        }
        let (value, w, s, sign) = best;
        let coeffs = (0..pairs)
            .map(|p| {
                let (i, j) = (p / self.rb, p % self.rb);
                let t: f64 = (0..self.cols).filter(|c| s >> c & 1 == 1).map(|c| self.at(i, j, c, w)).sum();
                (sign * t).max(0.0)
            })
            .collect();
        (value.max(0.0), coeffs)
    }

    /// Upper bound on the rectangle sup that avoids enumerating column sets.
    fn relaxed_sup(&self, plan: &[f64]) -> f64 {
        let mut best: f64 = 0.0;
        for w in 0..self.q {
            for sign in [1.0, -1.0] {
                let mut v = 0.0;
                for i in 0..self.ra {
                    for j in 0..self.rb {
                        let g = plan[i * self.rb + j];
                        if g > 0.0 {
                            v += g * (0..self.cols).map(|c| (sign * self.at(i, j, c, w)).max(0.0)).sum::<f64>();
                        }
                    }
                }
                best = best.max(v);
            }
        }
        best
    }

    fn sup(&self, plan: &[f64]) -> f64 {
        if self.cols <= 16 {
            self.rectangle_sup(plan).0
        } else {
            self.relaxed_sup(plan)
        }
    }
}

fn same_kernel(a: &Kernel, b: &Kernel) -> bool {
    a.q == b.q
        && a.cols == b.cols
        && a.rows() == b.rows()
        && a.cells == b.cells
        && a.weights.iter().zip(&b.weights).all(|(x, y)| (x - y).abs() <= 1e-14)
}

/// Bounds on the cut distance between two kernels.
///
/// Exact mode minimizes over row couplings (by linear programming) and column
/// permutations, with the exact supremum over rectangles. Heuristic mode
/// alternates column assignment and row transport and evaluates the result.
pub fn cut_distance(k1: &Kernel, k2: &Kernel, mode: CutMode) -> Result<CutBounds> {
    if k1.q != k2.q {
        return Err(Error::OutOfRange("kernels have different spin counts".into()));
    }
    let (a, b) = (k1.canonical(), k2.canonical());
    if same_kernel(&a, &b) {
        return Ok(CutBounds::zero());
    }
    let l = lcm(a.cols, b.cols);
    let (a, b) = (a.refine_columns(l / a.cols).canonical(), b.refine_columns(l / b.cols).canonical());
    let lower = global_lower(&a, &b);
    match mode {
        CutMode::Exact => {
            if a.rows() > EXACT_ROWS || b.rows() > EXACT_ROWS || l > EXACT_COLS {
                let configs = (a.rows() * b.rows()) as f64 * (1..=l).product::<usize>() as f64;
                return Err(Error::SizeGuard { configs, guard: (EXACT_ROWS * EXACT_ROWS * 720) as f64 });
            }
            let mut best = f64::INFINITY;
            for perm in all_permutations(l) {
                let diff = Diff::new(&a, &b, &perm);
                let res = lp::minimax_coupling(&a.weights, &b.weights, |plan| diff.rectangle_sup(plan))?;
                best = best.min(res.upper);
                if best <= lower + 1e-15 {
                    break;
                }
            }
            let v = best.max(lower);
            Ok(CutBounds { lower: v, upper: v })
        }
        CutMode::Heuristic => {
            let perm = heuristic_alignment(&a, &b)?;
            let diff = Diff::new(&a, &b, &perm.0);
            let small = l <= 10 && a.rows() * b.rows() <= 144;
            let upper = if small {
                lp::minimax_coupling(&a.weights, &b.weights, |plan| diff.rectangle_sup(plan))?.upper
            } else {
                diff.sup(&perm.1)
            };
            Ok(CutBounds { lower, upper: upper.max(lower).min(1.0) })
        }
    }
}

/// Alternating column assignment and row transport. Returns the column
/// permutation and the row coupling.
fn heuristic_alignment(a: &Kernel, b: &Kernel) -> Result<(Vec<usize>, Vec<f64>)> {
    let (cols, q) = (a.cols, a.q);
    let l1 = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(s, t)| (s - t).abs()).sum::<f64>();
    let profile = |k: &Kernel| {
        let mut p = vec![0.0; cols * q];
        for r in 0..k.rows() {
            for c in 0..cols {
                for w in 0..q {
                    p[c * q + w] += k.weights[r] * k.cell(r, c)[w];
                }
            }
        }
        p
    };
    let (pa, pb) = (profile(a), profile(b));
    let mut cost: Vec<f64> = (0..cols * cols)
        .map(|i| l1(&pa[(i / cols) * q..(i / cols + 1) * q], &pb[(i % cols) * q..(i % cols + 1) * q]))
        .collect();
    let ones = vec![1.0; cols];
    let mut perm = assignment(&cost, cols, &ones)?;
    let mut plan = Vec::new();
    for _ in 0..4 {
        let (ra, rb) = (a.rows(), b.rows());
        let row_cost: Vec<f64> = (0..ra * rb)
            .map(|p| {
                let (i, j) = (p / rb, p % rb);
                (0..cols).map(|c| l1(a.cell(i, c), b.cell(j, perm[c]))).sum::<f64>() / cols as f64
            })
            .collect();
        plan = lp::transport(&row_cost, &a.weights, &b.weights)?.1;
        for (idx, x) in cost.iter_mut().enumerate() {
            let (c, d) = (idx / cols, idx % cols);
            *x = (0..ra * rb)
                .filter(|&p| plan[p] > 0.0)
                .map(|p| plan[p] * l1(a.cell(p / rb, c), b.cell(p % rb, d)))
                .sum();
        }
        let next = assignment(&cost, cols, &ones)?;
        if next == perm {
            break;
        }
        perm = next;
    }
    Ok((perm, plan))
}

/// Minimum-cost permutation via the transport LP; vertices are integral.
fn assignment(cost: &[f64], n: usize, ones: &[f64]) -> Result<Vec<usize>> {
    let (_, plan) = lp::transport(cost, ones, ones)?;
    let mut used = vec![false; n];
    let mut perm = vec![0; n];
    for c in 0..n {
        let d = (0..n)
            .filter(|&d| !used[d])
            .max_by(|&x, &y| plan[c * n + x].total_cmp(&plan[c * n + y]).then(y.cmp(&x)))
            .expect("a free column remains");
        used[d] = true;
        perm[c] = d;
    }
    Ok(perm)
}

/// A nonnegative function on `Ω^N`, stored as a dense table.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleFunction {
    q: usize,
    arity: usize,
    table: Vec<f64>,
}

impl TupleFunction {
    pub fn new(q: usize, arity: usize, table: Vec<f64>) -> Result<Self> {
        if crate::numeric::checked_pow(q, arity) != Some(table.len()) {
            return Err(Error::OutOfRange("table length does not match q^N".into()));
        }
        if table.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::OutOfRange("tuple function must be finite and nonnegative".into()));
        }
        Ok(TupleFunction { q, arity, table })
    }

    pub fn constant(q: usize, arity: usize) -> Self {
        TupleFunction { q, arity, table: vec![1.0; q.pow(arity as u32)] }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }
}

/// `f ⋈ κ`: draws `N` columns uniformly with replacement and reweights rows by
/// `z_r = Σ_σ f(σ) ∏_i κ(r, x̂_i)(σ_i)`.
pub fn join_f<R: Rng + ?Sized>(k: &Kernel, f: &TupleFunction, rng: &mut R) -> Result<Kernel> {
    if f.q != k.q {
        return Err(Error::OutOfRange("function and kernel have different spin counts".into()));
    }
    let xs: Vec<usize> = (0..f.arity).map(|_| rng.gen_range(0..k.cols)).collect();
    // a positive constant multiplies every row by the same factor
    if f.table.iter().all(|&v| v == f.table[0]) && f.table[0] > 0.0 {
        return Ok(k.clone());
    }
    let mut t = vec![0usize; f.arity];
    let log_z: Vec<Option<f64>> = (0..k.rows())
        .map(|r| {
            let z: f64 = f
                .table
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 0.0)
                .map(|(idx, &v)| {
                    tuple_decode(idx, f.q, &mut t);
                    t.iter().zip(&xs).fold(v, |acc, (&s, &c)| acc * k.cell(r, c)[s])
                })
                .sum();
            (z > 0.0).then(|| z.ln())
        })
        .collect();
    k.reweight(&log_z)
}

/// A constraint attached to a kernel: weight function, the slot `h` facing the
/// new variable (unused for constraint-type factors), and a column per slot.
#[derive(Debug, Clone)]
pub(crate) struct Attached {
    pub psi: WeightFunction,
    pub h: usize,
    pub cols: Vec<usize>,
}

impl Attached {
    pub(crate) fn sample<R: Rng + ?Sized>(model: &Model, cols: usize, rng: &mut R) -> Attached {
        let psi = model.sample_weight_function(rng);
        let h = rng.gen_range(0..model.k());
        let cols = (0..model.k()).map(|_| rng.gen_range(0..cols)).collect();
        Attached { psi, h, cols }
    }
}

/// `Σ_σ p(σ) ∏_i Σ_{τ_{h_i}=σ} ψ_i(τ) ∏_{j≠h_i} κ(r, x_{ij})(τ_j)` for one row.
pub(crate) fn variable_factor(prior: &[f64], constraints: &[Attached], k: &Kernel, r: usize, buf: &mut [f64]) -> f64 {
    let mut acc = prior.to_vec();
    for a in constraints {
        let msgs: Vec<&[f64]> = a.cols.iter().map(|&c| k.cell(r, c)).collect();
        a.psi.contract(a.h, &msgs, buf);
        for (x, y) in acc.iter_mut().zip(buf.iter()) {
            *x *= y;
        }
    }
    acc.iter().sum()
}

/// `Σ_τ ψ(τ) ∏_j κ(r, x_j)(τ_j)` for one row.
pub(crate) fn constraint_factor(a: &Attached, k: &Kernel, r: usize) -> f64 {
    let msgs: Vec<&[f64]> = a.cols.iter().map(|&c| k.cell(r, c)).collect();
    a.psi.expectation(&msgs)
}

/// `κ^{⋈(N,M)}`: attaches `N` fresh variables of degree `d` and `M` fresh
/// constraints and reweights rows by the resulting likelihood.
pub fn join_nm<R: Rng + ?Sized>(k: &Kernel, n: usize, m: usize, model: &Model, rng: &mut R) -> Result<Kernel> {
    if model.q() != k.q {
        return Err(Error::OutOfRange("model and kernel have different spin counts".into()));
    }
    let vars: Vec<Vec<Attached>> = (0..n)
        .map(|_| (0..model.d()).map(|_| Attached::sample(model, k.cols, rng)).collect())
        .collect();
    let cons: Vec<Attached> = (0..m).map(|_| Attached::sample(model, k.cols, rng)).collect();
    let mut buf = vec![0.0; k.q];
    let log_z: Vec<Option<f64>> = (0..k.rows())
        .map(|r| {
            let mut lz = 0.0;
            for v in &vars {
                let z = variable_factor(model.prior(), v, k, r, &mut buf);
                if !(z > 0.0) {
                    return None;
                }
                lz += z.ln();
            }
            for a in &cons {
                let z = constraint_factor(a, k, r);
                if !(z > 0.0) {
                    return None;
                }
                lz += z.ln();
            }
            Some(lz)
        })
        .collect();
    k.reweight(&log_z)
}

/// Bounds on the Wasserstein distance between an ensemble and its `⋈(N,M)`
/// pushforward, using heuristic kernel cut bounds as ground costs.
pub fn check_join_invariance<R: Rng + ?Sized>(
    model: &Model,
    ensemble: &KernelEnsemble,
    n: usize,
    m: usize,
    trials: usize,
    rng: &mut R,
) -> Result<CutBounds> {
    let trials = trials.max(1);
    let mut pushed: Vec<(f64, Kernel)> = Vec::new();
    for (p, k) in &ensemble.members {
        for _ in 0..trials {
            let mut r = fork(rng);
            pushed.push((p / trials as f64, join_nm(k, n, m, model, &mut r)?));
        }
    }
    let (src, dst) = (&ensemble.members, &pushed);
    let costs: Vec<Result<CutBounds>> = (0..src.len() * dst.len())
        .into_par_iter()
        .map(|idx| cut_distance(&src[idx / dst.len()].1, &dst[idx % dst.len()].1, CutMode::Heuristic))
        .collect();
    let costs = costs.into_iter().collect::<Result<Vec<_>>>()?;
    let supply: Vec<f64> = src.iter().map(|(p, _)| *p).collect();
    let demand: Vec<f64> = dst.iter().map(|(p, _)| *p).collect();
    let lo: Vec<f64> = costs.iter().map(|c| c.lower).collect();
    let hi: Vec<f64> = costs.iter().map(|c| c.upper).collect();
    let lower = if lo.iter().all(|&x| x == 0.0) { 0.0 } else { lp::transport(&lo, &supply, &demand)?.0 };
    let upper = if hi.iter().all(|&x| x == 0.0) { 0.0 } else { lp::transport(&hi, &supply, &demand)?.0 };
    Ok(CutBounds { lower: lower.max(0.0), upper: upper.max(lower).max(0.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rng_from_seed;

    fn point(q: usize, s: usize) -> Vec<f64> {
        let mut c = vec![0.0; q];
        c[s] = 1.0;
        c
    }

    #[test]
    fn measure_embedding() {
        let mu = Measure::new(2, 2, vec![(vec![0, 0], 0.5), (vec![1, 1], 0.5)]).unwrap();
        let k = Kernel::from_measure(&mu).unwrap();
        assert_eq!(k.rows(), 2);
        assert_eq!(k.cell(0, 1), &[1.0, 0.0]);
        assert_eq!(k.cell(1, 0), &[0.0, 1.0]);
        let pm = Kernel::from_measure(&Measure::point_mass(3, &[2, 0]).unwrap()).unwrap();
        assert_eq!(pm.rows(), 1);
    }

    #[test]
    fn canonical_is_idempotent() {
        let k = Kernel::new(2, 1, vec![(0.2, vec![point(2, 1)]), (0.3, vec![point(2, 0)]), (0.5, vec![point(2, 1)])]).unwrap();
        let c = k.canonical();
        assert_eq!(c.rows(), 2);
        assert_eq!(c.canonical(), c);
        assert_eq!(cut_distance(&k, &c, CutMode::Exact).unwrap(), CutBounds::zero());
    }

    #[test]
    fn constant_kernels_at_distance_one() {
        let a = Kernel::one_row(2, vec![point(2, 0)]).unwrap();
        let b = Kernel::one_row(2, vec![point(2, 1)]).unwrap();
        for mode in [CutMode::Exact, CutMode::Heuristic] {
            let d = cut_distance(&a, &b, mode).unwrap();
            assert!((d.lower - 1.0).abs() < 1e-12 && (d.upper - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn row_and_column_permutations_are_free() {
        let mut rng = rng_from_seed(3);
        let k = Kernel::random(3, 3, 3, &mut rng);
        let rows: Vec<(f64, Vec<Vec<f64>>)> = [2, 0, 1]
            .iter()
            .map(|&r| (k.weight(r), [1, 2, 0].iter().map(|&c| k.cell(r, c).to_vec()).collect()))
            .collect();
        let p = Kernel::new(3, 3, rows).unwrap();
        let d = cut_distance(&k, &p, CutMode::Exact).unwrap();
        assert!(d.upper < 1e-9, "{d:?}");
    }

    #[test]
    fn exact_symmetry_and_bounds() {
        let mut rng = rng_from_seed(8);
        for _ in 0..5 {
            let a = Kernel::random(2, 2, 3, &mut rng);
            let b = Kernel::random(2, 3, 3, &mut rng);
            let ab = cut_distance(&a, &b, CutMode::Exact).unwrap();
            let ba = cut_distance(&b, &a, CutMode::Exact).unwrap();
            assert!((ab.upper - ba.upper).abs() < 1e-9);
            let h = cut_distance(&a, &b, CutMode::Heuristic).unwrap();
            assert!(h.lower <= ab.upper + 1e-12 && ab.upper <= h.upper + 1e-9);
        }
    }

    #[test]
    fn align_shares_weights() {
        let a = Kernel::new(2, 2, vec![(0.3, vec![point(2, 0), point(2, 1)]), (0.7, vec![point(2, 1), point(2, 1)])]).unwrap();
        let b = Kernel::new(2, 3, vec![(0.5, vec![point(2, 0); 3]), (0.5, vec![point(2, 1); 3])]).unwrap();
        let (x, y) = Kernel::align(&a, &b);
        assert_eq!(x.weights(), y.weights());
        assert_eq!(x.rows(), 3);
        assert_eq!(x.cols(), 6);
    }

    #[test]
    fn join_f_fixtures() {
        let mut rng = rng_from_seed(1);
        let k = Kernel::new(2, 1, vec![(0.5, vec![point(2, 1)]), (0.5, vec![point(2, 0)])]).unwrap();
        assert_eq!(join_f(&k, &TupleFunction::constant(2, 2), &mut rng).unwrap(), k);
        let pick = TupleFunction::new(2, 1, vec![0.0, 1.0]).unwrap();
        let j = join_f(&k, &pick, &mut rng).unwrap();
        assert_eq!(j.rows(), 1);
        assert_eq!(j.cell(0, 0), &[0.0, 1.0]);
        let kill = TupleFunction::new(2, 1, vec![0.0, 0.0]).unwrap();
        assert_eq!(join_f(&k, &kill, &mut rng), Err(Error::DegenerateJoin));
    }

    #[test]
    fn join_nm_fixtures() {
        let mut rng = rng_from_seed(2);
        let model = Model::potts(2, 3, 1.5).unwrap();
        let one = Kernel::random(2, 1, 4, &mut rng);
        assert_eq!(join_nm(&one, 2, 3, &model, &mut rng).unwrap(), one);
        let k = Kernel::random(2, 3, 4, &mut rng);
        assert_eq!(join_nm(&k, 0, 0, &model, &mut rng).unwrap(), k);
        let flat = Model::kspin(2, 3, 0.0).unwrap();
        let j = join_nm(&k, 2, 2, &flat, &mut rng).unwrap();
        for r in 0..k.rows() {
            assert!((j.weight(r) - k.weight(r)).abs() < 1e-12);
        }
    }

    #[test]
    fn invariance_of_one_row_ensemble() {
        let mut rng = rng_from_seed(4);
        let model = Model::kspin(2, 3, 1.0).unwrap();
        let ens = KernelEnsemble::new(vec![(0.5, Kernel::random(2, 1, 3, &mut rng)), (0.5, Kernel::uniform(2, 3))]).unwrap();
        let d = check_join_invariance(&model, &ens, 2, 2, 2, &mut rng).unwrap();
        assert_eq!(d, CutBounds::zero());
    }

    #[test]
    fn doc_round_trip() {
        let k = Kernel::random(3, 2, 2, &mut rng_from_seed(5));
        let text = serde_json::to_string(&k.to_doc()).unwrap();
        let back = Kernel::from_doc(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, k);
    }
}
