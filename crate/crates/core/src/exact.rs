//! Brute-force enumeration oracle: partition functions, marginals, standard
//! messages and exact sampling.

use rand::Rng;

use crate::bp::MessageSet;
use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::measure::Measure;
use crate::numeric::LogSumExp;

/// Restriction of the configuration space.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// The subcube fixing the listed `(variable, spin)` pairs.
    Subcube(Vec<(usize, usize)>),
    /// An explicit list of configurations (assumed distinct).
    Configs(Vec<Vec<usize>>),
}

pub const DEFAULT_GUARD: f64 = 2_147_483_648.0;
/// Largest number of configurations [`Oracle::boltzmann`] will materialize.
pub const MATERIALIZE_GUARD: usize = 1 << 24;

/// Enumeration oracle with a configurable size guard.
#[derive(Debug, Clone, Copy)]
pub struct Oracle {
    pub guard: f64,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle { guard: DEFAULT_GUARD }
    }
}

struct LogTables {
    priors: Vec<Vec<Option<f64>>>,
    weights: Vec<Vec<Option<f64>>>,
}

fn ln_opt(x: f64) -> Option<f64> {
    (x > 0.0).then(|| x.ln())
}

impl LogTables {
    fn new(g: &FactorGraph) -> Self {
        LogTables {
            priors: g.priors().iter().map(|p| p.iter().map(|&x| ln_opt(x)).collect()).collect(),
            weights: g.constraints().iter().map(|c| c.weight.table().iter().map(|&x| ln_opt(x)).collect()).collect(),
        }
    }

    fn log_weight(&self, g: &FactorGraph, sigma: &[usize]) -> Option<f64> {
        let mut lw = 0.0;
        for (v, &s) in sigma.iter().enumerate() {
            lw += self.priors[v][s]?;
        }
        let q = g.q();
        for (a, c) in g.constraints().iter().enumerate() {
            let idx = c.vars.iter().fold(0usize, |acc, &v| acc * q + sigma[v]);
            lw += self.weights[a][idx]?;
        }
        Some(lw)
    }
}

impl Oracle {
    pub fn new(guard: f64) -> Self {
        Oracle { guard }
    }

    /// Calls `f(σ, ln w(σ))` for every configuration of positive weight in the event.
    pub fn visit<F>(&self, g: &FactorGraph, event: Option<&Event>, mut f: F) -> Result<()>
    where
        F: FnMut(&[usize], f64),
    {
        let tables = LogTables::new(g);
        let n = g.n();
        match event {
            Some(Event::Configs(list)) => {
                if list.len() as f64 > self.guard {
                    return Err(Error::SizeGuard { configs: list.len() as f64, guard: self.guard });
                }
                for c in list {
                    if c.len() != n || c.iter().any(|&s| s >= g.q()) {
                        return Err(Error::OutOfRange("event configuration does not fit the graph".into()));
                    }
                    if let Some(lw) = tables.log_weight(g, c) {
                        f(c, lw);
                    }
                }
                Ok(())
            }
            _ => {
                let mut fixed: Vec<Option<usize>> = vec![None; n];
                if let Some(Event::Subcube(pins)) = event {
                    for &(v, s) in pins {
                        if v >= n || s >= g.q() {
                            return Err(Error::OutOfRange(format!("pin ({v}, {s}) out of range")));
                        }
                        if fixed[v].is_some_and(|t| t != s) {
                            return Ok(());
                        }
                        fixed[v] = Some(s);
                    }
                }
                let domains: Vec<Vec<usize>> = (0..n)
                    .map(|v| match fixed[v] {
                        Some(s) => vec![s],
                        None => (0..g.q()).filter(|&s| g.prior(v)[s] > 0.0).collect(),
                    })
                    .collect();
                let count: f64 = domains.iter().map(|d| d.len() as f64).product();
                if count > self.guard {
                    return Err(Error::SizeGuard { configs: count, guard: self.guard });
                }
                if domains.iter().any(|d| d.is_empty()) {
                    return Ok(());
                }
                let mut pos = vec![0usize; n];
                let mut sigma: Vec<usize> = domains.iter().map(|d| d[0]).collect();
                loop {
                    if let Some(lw) = tables.log_weight(g, &sigma) {
                        f(&sigma, lw);
                    }
                    // odometer, last variable fastest
                    let mut v = n;
                    loop {
                        if v == 0 {
                            return Ok(());
                        }
                        v -= 1;
                        pos[v] += 1;
                        if pos[v] < domains[v].len() {
                            sigma[v] = domains[v][pos[v]];
                            break;
                        }
                        pos[v] = 0;
                        sigma[v] = domains[v][0];
                    }
                }
            }
        }
    }

    /// `ln Z` restricted to the event; `None` when the event has zero weight.
    pub fn log_partition_function(&self, g: &FactorGraph, event: Option<&Event>) -> Result<Option<f64>> {
        let mut acc = LogSumExp::new();
        self.visit(g, event, |_, lw| acc.add(lw))?;
        Ok(acc.value())
    }

    /// Like [`Self::log_partition_function`] but zero weight is an error.
    pub fn log_z(&self, g: &FactorGraph, event: Option<&Event>) -> Result<f64> {
        self.log_partition_function(g, event)?.ok_or(Error::ZeroWeight)
    }

    /// Accumulates `f(σ, μ(σ|event), out)` over the conditional Boltzmann measure.
    pub fn expect<F>(&self, g: &FactorGraph, event: Option<&Event>, dim: usize, mut f: F) -> Result<Vec<f64>>
    where
        F: FnMut(&[usize], f64, &mut [f64]),
    {
        let lz = self.log_z(g, event)?;
        let mut out = vec![0.0; dim];
        self.visit(g, event, |s, lw| f(s, (lw - lz).exp(), &mut out))?;
        Ok(out)
    }

    pub fn marginal(&self, g: &FactorGraph, v: usize, event: Option<&Event>) -> Result<Vec<f64>> {
        check_var(g, v)?;
        self.expect(g, event, g.q(), |s, p, out| out[s[v]] += p)
    }

    /// Joint law of `(σ_v, σ_w)` as a row-major `q×q` table.
    pub fn pair_marginal(&self, g: &FactorGraph, v: usize, w: usize, event: Option<&Event>) -> Result<Vec<f64>> {
        check_var(g, v)?;
        check_var(g, w)?;
        let q = g.q();
        self.expect(g, event, q * q, |s, p, out| out[s[v] * q + s[w]] += p)
    }

    /// Joint law of the listed variables (repeats allowed).
    pub fn joint_marginal(&self, g: &FactorGraph, vars: &[usize], event: Option<&Event>) -> Result<Vec<f64>> {
        for &v in vars {
            check_var(g, v)?;
        }
        let q = g.q();
        self.expect(g, event, q.pow(vars.len() as u32), |s, p, out| {
            out[vars.iter().fold(0, |acc, &v| acc * q + s[v])] += p
        })
    }

    /// Materializes the conditional Boltzmann measure.
    pub fn boltzmann(&self, g: &FactorGraph, event: Option<&Event>) -> Result<Measure> {
        let guard = Oracle { guard: self.guard.min(MATERIALIZE_GUARD as f64) };
        let lz = guard.log_z(g, event)?;
        let mut configs = Vec::new();
        guard.visit(g, event, |s, lw| configs.push((s.to_vec(), (lw - lz).exp())))?;
        Measure::new(g.q(), g.n(), configs)
    }

    /// Exact draw from `μ_G(·|event)` by inverse-CDF over the enumeration order.
    pub fn sample<R: Rng + ?Sized>(&self, g: &FactorGraph, event: Option<&Event>, rng: &mut R) -> Result<Vec<usize>> {
        let lz = self.log_z(g, event)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen: Option<Vec<usize>> = None;
        let mut last: Vec<usize> = Vec::new();
        self.visit(g, event, |s, lw| {
            if chosen.is_some() {
                return;
            }
            acc += (lw - lz).exp();
            if u < acc {
                chosen = Some(s.to_vec());
            } else {
                last.clear();
                last.extend_from_slice(s);
            }
        })?;
        Ok(chosen.unwrap_or(last))
    }

    /// `⟨1{σ_v=·}/ψ_a⟩ / ⟨1/ψ_a⟩`; requires `ψ_a > 0`.
    pub fn standard_message_v_to_a_ratio(&self, g: &FactorGraph, v: usize, a: usize, event: Option<&Event>) -> Result<Vec<f64>> {
        check_edge(g, v, a)?;
        let c = &g.constraint(a);
        if c.weight.has_zero() {
            return Err(Error::InvalidModel("ratio formula needs a positive weight table".into()));
        }
        let q = g.q();
        let mut out = self.expect(g, event, q, |s, p, out| {
            let idx = c.vars.iter().fold(0, |acc, &w| acc * q + s[w]);
            out[s[v]] += p / c.weight.table()[idx];
        })?;
        crate::numeric::normalize(&mut out).ok_or(Error::ZeroWeight)?;
        Ok(out)
    }

    /// Marginal of `v` in `G − a`.
    pub fn standard_message_v_to_a_surgery(&self, g: &FactorGraph, v: usize, a: usize, event: Option<&Event>) -> Result<Vec<f64>> {
        check_edge(g, v, a)?;
        self.marginal(&g.remove_constraints(&[a]), v, event)
    }

    /// Standard message `v → a`: ratio formula for positive tables, graph surgery otherwise.
    pub fn standard_message_v_to_a(&self, g: &FactorGraph, v: usize, a: usize, event: Option<&Event>) -> Result<Vec<f64>> {
        if g.constraint(a).weight.has_zero() {
            self.standard_message_v_to_a_surgery(g, v, a, event)
        } else {
            self.standard_message_v_to_a_ratio(g, v, a, event)
        }
    }

    /// `⟨1{σ_v=·}/(p_v ∏_{b∈∂v∖a} ψ_b)⟩` normalized; requires positive `ψ_b`.
    pub fn standard_message_a_to_v_ratio(&self, g: &FactorGraph, a: usize, v: usize, event: Option<&Event>) -> Result<Vec<f64>> {
        check_edge(g, v, a)?;
        let others: Vec<usize> = g.neighbors(v).into_iter().filter(|&b| b != a).collect();
        if others.iter().any(|&b| g.constraint(b).weight.has_zero()) {
            return Err(Error::InvalidModel("ratio formula needs positive weight tables".into()));
        }
        let q = g.q();
        let prior = g.prior(v);
        let mut out = self.expect(g, event, q, |s, p, out| {
            let mut den = prior[s[v]];
            for &b in &others {
                let c = g.constraint(b);
                den *= c.weight.table()[c.vars.iter().fold(0, |acc, &w| acc * q + s[w])];
            }
            out[s[v]] += p / den;
        })?;
        crate::numeric::normalize(&mut out).ok_or(Error::ZeroWeight)?;
        Ok(out)
    }

    /// Marginal of `v` after deleting `∂v∖a` and flattening the prior of `v` on its support.
    pub fn standard_message_a_to_v_surgery(&self, g: &FactorGraph, a: usize, v: usize, event: Option<&Event>) -> Result<Vec<f64>> {
        check_edge(g, v, a)?;
        let others: Vec<usize> = g.neighbors(v).into_iter().filter(|&b| b != a).collect();
        let flat = g.prior(v).iter().map(|&p| if p > 0.0 { 1.0 } else { 0.0 }).collect();
        let h = g.remove_constraints(&others).with_prior(v, flat)?;
        self.marginal(&h, v, event)
    }

    /// Standard message `a → v`: ratio formula for positive tables, graph surgery otherwise.
    pub fn standard_message_a_to_v(&self, g: &FactorGraph, a: usize, v: usize, event: Option<&Event>) -> Result<Vec<f64>> {
        let zeros = g.neighbors(v).into_iter().any(|b| b != a && g.constraint(b).weight.has_zero());
        if zeros {
            self.standard_message_a_to_v_surgery(g, a, v, event)
        } else {
            self.standard_message_a_to_v_ratio(g, a, v, event)
        }
    }

    /// All standard messages given the event.
    pub fn standard_messages(&self, g: &FactorGraph, event: Option<&Event>) -> Result<MessageSet> {
        if g.constraints().iter().any(|c| c.weight.has_zero()) {
            let mut msgs = MessageSet::uniform(g);
            for e in 0..g.num_edges() {
                let (a, v) = (e / g.k(), g.edge_var(e));
                msgs.v2f_mut(e).copy_from_slice(&self.standard_message_v_to_a_surgery(g, v, a, event)?);
                msgs.f2v_mut(e).copy_from_slice(&self.standard_message_a_to_v_surgery(g, a, v, event)?);
            }
            return Ok(msgs);
        }
        let measure = self.boltzmann(g, event)?;
        Ok(standard_messages_from_measure(g, &measure))
    }
}

/// Standard messages by the ratio formulas, swept over an explicit measure.
/// Requires strictly positive weight tables.
pub fn standard_messages_from_measure(g: &FactorGraph, measure: &Measure) -> MessageSet {
    let (q, k) = (g.q(), g.k());
    let mut msgs = MessageSet::zeros(g);
    let neighbors: Vec<Vec<usize>> = (0..g.n()).map(|v| g.neighbors(v)).collect();
    let mut psi = vec![0.0; g.m()];
    let mut local = vec![0.0; g.n()];
    let mut s = vec![0usize; g.n()];
    for i in 0..measure.len() {
        let p = measure.prob(i);
        for (x, &y) in s.iter_mut().zip(measure.config(i)) {
            *x = y as usize;
        }
        for (a, c) in g.constraints().iter().enumerate() {
            psi[a] = c.weight.table()[c.vars.iter().fold(0, |acc, &w| acc * q + s[w])];
        }
        for v in 0..g.n() {
            local[v] = g.prior(v)[s[v]] * neighbors[v].iter().map(|&b| psi[b]).product::<f64>();
        }
        for (a, c) in g.constraints().iter().enumerate() {
            let r = p / psi[a];
            for (j, &v) in c.vars.iter().enumerate() {
                let e = a * k + j;
                msgs.v2f_mut(e)[s[v]] += r;
                msgs.f2v_mut(e)[s[v]] += p * psi[a] / local[v];
            }
        }
    }
    msgs.normalize_all();
    msgs
}

fn check_var(g: &FactorGraph, v: usize) -> Result<()> {
    if v < g.n() {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!("variable {v} out of range")))
    }
}

fn check_edge(g: &FactorGraph, v: usize, a: usize) -> Result<()> {
    check_var(g, v)?;
    if a >= g.m() || !g.constraint(a).vars.contains(&v) {
        return Err(Error::OutOfRange(format!("constraint {a} is not adjacent to {v}")));
    }
    Ok(())
}

pub fn log_partition_function(g: &FactorGraph, event: Option<&Event>) -> Result<Option<f64>> {
    Oracle::default().log_partition_function(g, event)
}

pub fn marginal(g: &FactorGraph, v: usize, event: Option<&Event>) -> Result<Vec<f64>> {
    Oracle::default().marginal(g, v, event)
}

pub fn pair_marginal(g: &FactorGraph, v: usize, w: usize, event: Option<&Event>) -> Result<Vec<f64>> {
    Oracle::default().pair_marginal(g, v, w, event)
}

pub fn standard_message_v_to_a(g: &FactorGraph, v: usize, a: usize, event: Option<&Event>) -> Result<Vec<f64>> {
    Oracle::default().standard_message_v_to_a(g, v, a, event)
}

pub fn standard_message_a_to_v(g: &FactorGraph, a: usize, v: usize, event: Option<&Event>) -> Result<Vec<f64>> {
    Oracle::default().standard_message_a_to_v(g, a, v, event)
}

pub fn exact_sample<R: Rng + ?Sized>(g: &FactorGraph, event: Option<&Event>, rng: &mut R) -> Result<Vec<usize>> {
    Oracle::default().sample(g, event, rng)
}

pub fn boltzmann(g: &FactorGraph, event: Option<&Event>) -> Result<Measure> {
    Oracle::default().boltzmann(g, event)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{pin_variables, sample_pairing_graph};
    use crate::model::{Model, WeightFunction};
    use crate::numeric::rng_from_seed;

    fn single_edge(w: WeightFunction, prior: Vec<f64>) -> FactorGraph {
        FactorGraph::from_constraints(2, 2, 3, vec![prior.clone(), prior], vec![(vec![0, 1], w)]).unwrap()
    }

    #[test]
    fn spin_glass_beta_zero() {
        let m = Model::kspin(2, 3, 0.0).unwrap();
        let g = sample_pairing_graph(&m, 6, &mut rng_from_seed(1)).unwrap();
        let lz = log_partition_function(&g, None).unwrap().unwrap();
        let expected = 6.0 * 2f64.ln() - 9.0 * 2f64.ln();
        assert!((lz - expected).abs() < 1e-12);
    }

    #[test]
    fn potts_single_edge() {
        let beta: f64 = 0.8;
        let m = Model::potts(2, 3, beta).unwrap();
        let g = single_edge(m.sample_weight_function(&mut rng_from_seed(0)), vec![0.5, 0.5]);
        let lz = log_partition_function(&g, None).unwrap().unwrap();
        assert!((lz - ((1.0 + (-beta).exp()) / 2.0).ln()).abs() < 1e-14);
        let pm = pair_marginal(&g, 0, 1, None).unwrap();
        assert!(pm[1] > pm[0]);
    }

    #[test]
    fn hardcore_single_edge_marginal() {
        let lambda = 1.7;
        let m = Model::hardcore(3, lambda).unwrap();
        let g = single_edge(m.sample_weight_function(&mut rng_from_seed(0)), m.prior().to_vec());
        let mu = marginal(&g, 0, None).unwrap();
        assert!((mu[1] - lambda / (1.0 + 2.0 * lambda)).abs() < 1e-14);
        let pinned = Event::Subcube(vec![(1, 1)]);
        assert_eq!(marginal(&g, 0, Some(&pinned)).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn full_pinning_event() {
        let m = Model::potts(3, 3, 0.4).unwrap();
        let g = sample_pairing_graph(&m, 4, &mut rng_from_seed(3)).unwrap();
        let sigma = [0usize, 2, 1, 1];
        let ev = Event::Subcube(sigma.iter().copied().enumerate().collect());
        let lz = log_partition_function(&g, Some(&ev)).unwrap().unwrap();
        let mut direct = 4.0 * (1.0f64 / 3.0).ln();
        for c in g.constraints() {
            direct += c.weight.get(&c.vars.iter().map(|&v| sigma[v]).collect::<Vec<_>>()).ln();
        }
        assert!((lz - direct).abs() < 1e-13);
    }

    #[test]
    fn zero_weight_event_is_flagged() {
        let m = Model::hardcore(3, 1.0).unwrap();
        let g = single_edge(m.sample_weight_function(&mut rng_from_seed(0)), m.prior().to_vec());
        let ev = Event::Subcube(vec![(0, 1), (1, 1)]);
        assert_eq!(log_partition_function(&g, Some(&ev)).unwrap(), None);
        assert_eq!(marginal(&g, 0, Some(&ev)), Err(Error::ZeroWeight));
    }

    #[test]
    fn guard_trips() {
        let m = Model::potts(2, 3, 0.4).unwrap();
        let g = sample_pairing_graph(&m, 12, &mut rng_from_seed(3)).unwrap();
        assert!(matches!(Oracle::new(100.0).log_partition_function(&g, None), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn pinned_prior_gives_point_mass() {
        let m = Model::potts(3, 3, 0.4).unwrap();
        let g = sample_pairing_graph(&m, 4, &mut rng_from_seed(5)).unwrap();
        let p = pin_variables(&g, &[(1, 2)]).unwrap();
        let mg = marginal(&p, 1, None).unwrap();
        assert!(mg[0] == 0.0 && mg[1] == 0.0 && (mg[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ratio_and_surgery_agree() {
        let m = Model::kspin(3, 3, 1.1).unwrap();
        let g = sample_pairing_graph(&m, 6, &mut rng_from_seed(9)).unwrap();
        let bulk = Oracle::default().standard_messages(&g, None).unwrap();
        for e in 0..g.num_edges() {
            let (a, v) = (e / 3, g.edge_var(e));
            let r = Oracle::default().standard_message_v_to_a_ratio(&g, v, a, None).unwrap();
            let s = Oracle::default().standard_message_v_to_a_surgery(&g, v, a, None).unwrap();
            let r2 = Oracle::default().standard_message_a_to_v_ratio(&g, a, v, None).unwrap();
            let s2 = Oracle::default().standard_message_a_to_v_surgery(&g, a, v, None).unwrap();
            for i in 0..2 {
                assert!((r[i] - s[i]).abs() < 1e-12);
                assert!((r2[i] - s2[i]).abs() < 1e-12);
                assert!((bulk.v2f(e)[i] - r[i]).abs() < 1e-12);
                assert!((bulk.f2v(e)[i] - r2[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn samples_are_independent_sets() {
        let m = Model::hardcore(3, 2.0).unwrap();
        let g = sample_pairing_graph(&m, 6, &mut rng_from_seed(2)).unwrap();
        let mut rng = rng_from_seed(4);
        for _ in 0..200 {
            let s = exact_sample(&g, None, &mut rng).unwrap();
            for c in g.constraints() {
                assert!(!(s[c.vars[0]] == 1 && s[c.vars[1]] == 1));
            }
        }
    }
}
