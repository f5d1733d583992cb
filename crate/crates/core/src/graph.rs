//! Factor graphs in the pairing model: sampling, simplicity, cavity surgery,
//! pinning and serialization.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, WeightFunction};

/// A constraint node: its weight function and, per slot, the variable clone it is paired with.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub vars: Vec<usize>,
    /// Clone index `h ∈ [d]` at `vars[j]` used by slot `j`.
    pub clones: Vec<usize>,
    pub weight: WeightFunction,
}

/// A factor graph given by an explicit clone pairing.
///
/// Every constraint clone is paired; variable clones may be unpaired (cavities).
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    q: usize,
    k: usize,
    d: usize,
    priors: Vec<Vec<f64>>,
    constraints: Vec<Constraint>,
    // derived: per variable, per clone, the constraint slot `(a, j)` it is paired with
    var_clones: Vec<Vec<Option<(usize, usize)>>>,
    // derived: per variable, edge ids `a*k + j` in clone order
    var_edges: Vec<Vec<usize>>,
}

impl FactorGraph {
    /// Builds a graph from constraints given as `(variables, weight)`; clones are
    /// assigned to each variable in order of appearance.
    pub fn from_constraints(
        q: usize,
        k: usize,
        d: usize,
        priors: Vec<Vec<f64>>,
        constraints: Vec<(Vec<usize>, WeightFunction)>,
    ) -> Result<FactorGraph> {
        let mut used = vec![0usize; priors.len()];
        let mut out = Vec::with_capacity(constraints.len());
        for (vars, weight) in constraints {
            let mut clones = Vec::with_capacity(vars.len());
            for &v in &vars {
                if v >= priors.len() {
                    return Err(Error::OutOfRange(format!("variable {v} out of range")));
                }
                clones.push(used[v]);
                used[v] += 1;
            }
            out.push(Constraint { vars, clones, weight });
        }
        Self::from_parts(q, k, d, priors, out)
    }

    /// Builds a graph from fully specified constraints, validating the pairing.
    pub fn from_parts(
        q: usize,
        k: usize,
        d: usize,
        priors: Vec<Vec<f64>>,
        constraints: Vec<Constraint>,
    ) -> Result<FactorGraph> {
        if q < 2 || k < 1 || d < 1 {
            return Err(Error::InvalidModel(format!("bad shape q={q}, k={k}, d={d}")));
        }
        for p in &priors {
            if p.len() != q || p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || p.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidModel("prior weights must be q nonnegative numbers, not all zero".into()));
            }
        }
        let n = priors.len();
        let mut var_clones = vec![vec![None; d]; n];
        for (a, c) in constraints.iter().enumerate() {
            if c.vars.len() != k || c.clones.len() != k || c.weight.k() != k || c.weight.q() != q {
                return Err(Error::InvalidModel(format!("constraint {a} has the wrong arity or spin count")));
            }
            for j in 0..k {
                let (v, h) = (c.vars[j], c.clones[j]);
                if v >= n || h >= d {
                    return Err(Error::OutOfRange(format!("clone ({v}, {h}) of constraint {a} out of range")));
                }
                if var_clones[v][h].is_some() {
                    return Err(Error::InvalidModel(format!("variable clone ({v}, {h}) paired twice")));
                }
                var_clones[v][h] = Some((a, j));
            }
        }
        let var_edges = var_clones
            .iter()
            .map(|cl| cl.iter().flatten().map(|&(a, j)| a * k + j).collect())
            .collect();
        Ok(FactorGraph { q, k, d, priors, constraints, var_clones, var_edges })
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

    /// Number of variable nodes.
    pub fn n(&self) -> usize {
        self.priors.len()
    }

    /// Number of constraint nodes.
    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn prior(&self, v: usize) -> &[f64] {
        &self.priors[v]
    }

    pub fn priors(&self) -> &[Vec<f64>] {
        &self.priors
    }

    pub fn constraint(&self, a: usize) -> &Constraint {
        &self.constraints[a]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Number of directed edge slots `m·k`; edge `e` is slot `e % k` of constraint `e / k`.
    pub fn num_edges(&self) -> usize {
        self.constraints.len() * self.k
    }

    pub fn edge_var(&self, e: usize) -> usize {
        self.constraints[e / self.k].vars[e % self.k]
    }

    /// Edge ids incident to `v`, in clone order.
    pub fn var_edges(&self, v: usize) -> &[usize] {
        &self.var_edges[v]
    }

    /// The constraint slot paired with clone `h` of `v`, if any.
    pub fn clone_partner(&self, v: usize, h: usize) -> Option<(usize, usize)> {
        self.var_clones[v][h]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.var_edges[v].len()
    }

    /// Distinct constraints adjacent to `v`, in clone order.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &e in &self.var_edges[v] {
            let a = e / self.k;
            if !out.contains(&a) {
                out.push(a);
            }
        }
        out
    }

    /// True iff no constraint touches a variable twice and no two constraints
    /// have the same variable multiset (no multi-edges).
    pub fn is_simple(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let mut vs = c.vars.clone();
            vs.sort_unstable();
            if vs.windows(2).any(|w| w[0] == w[1]) {
                return false;
            }
            if !seen.insert(vs) {
                return false;
            }
        }
        true
    }

    /// True iff the factor graph, viewed as a bipartite multigraph, has no cycle.
    pub fn is_acyclic(&self) -> bool {
        // union-find over variables and constraints
        let n = self.n();
        let mut parent: Vec<usize> = (0..n + self.m()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (a, c) in self.constraints.iter().enumerate() {
            for &v in &c.vars {
                let (x, y) = (find(&mut parent, v), find(&mut parent, n + a));
                if x == y {
                    return false;
                }
                parent[x] = y;
            }
        }
        true
    }

    /// Variables with unpaired clones.
    pub fn cavities(&self) -> CavitySet {
        let entries = self
            .var_clones
            .iter()
            .enumerate()
            .filter_map(|(v, cl)| {
                let slots: Vec<usize> = cl.iter().enumerate().filter(|(_, x)| x.is_none()).map(|(h, _)| h).collect();
                (!slots.is_empty()).then_some(CavityEntry { var: v, unpaired: slots })
            })
            .collect();
        CavitySet { entries }
    }

    /// The graph with the given constraints deleted (variables keep their labels).
    pub fn remove_constraints(&self, remove: &[usize]) -> FactorGraph {
        let drop: HashSet<usize> = remove.iter().copied().collect();
        let cs = self
            .constraints
            .iter()
            .enumerate()
            .filter(|(a, _)| !drop.contains(a))
            .map(|(_, c)| c.clone())
            .collect();
        FactorGraph::from_parts(self.q, self.k, self.d, self.priors.clone(), cs).expect("subgraph is valid")
    }

    /// The graph with the prior of `v` replaced by `prior`.
    pub fn with_prior(&self, v: usize, prior: Vec<f64>) -> Result<FactorGraph> {
        let mut priors = self.priors.clone();
        if v >= priors.len() {
            return Err(Error::OutOfRange(format!("variable {v} out of range")));
        }
        priors[v] = prior;
        FactorGraph::from_parts(self.q, self.k, self.d, priors, self.constraints.clone())
    }

    /// The graph with every prior replaced.
    pub fn with_priors(&self, priors: Vec<Vec<f64>>) -> Result<FactorGraph> {
        if priors.len() != self.n() {
            return Err(Error::OutOfRange("prior list has the wrong length".into()));
        }
        FactorGraph::from_parts(self.q, self.k, self.d, priors, self.constraints.clone())
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            q: self.q,
            k: self.k,
            d: self.d,
            nodes: NodesDoc { n: self.n(), priors: self.priors.clone() },
            constraints: ConstraintsDoc { m: self.m() },
            pairing: PairingDoc {
                clones: self
                    .constraints
                    .iter()
                    .map(|c| c.vars.iter().zip(&c.clones).map(|(&v, &h)| [v, h]).collect())
                    .collect(),
            },
            weights: WeightsDoc { tables: self.constraints.iter().map(|c| c.weight.table().to_vec()).collect() },
        }
    }

    pub fn from_doc(doc: &GraphDoc) -> Result<FactorGraph> {
        let m = doc.constraints.m;
        if doc.pairing.clones.len() != m || doc.weights.tables.len() != m || doc.nodes.priors.len() != doc.nodes.n {
            return Err(Error::Parse("section lengths disagree".into()));
        }
        let cs = doc
            .pairing
            .clones
            .iter()
            .zip(&doc.weights.tables)
            .map(|(cl, t)| {
                Ok(Constraint {
                    vars: cl.iter().map(|p| p[0]).collect(),
                    clones: cl.iter().map(|p| p[1]).collect(),
                    weight: WeightFunction::with_zeros(doc.q, doc.k, t.clone())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FactorGraph::from_parts(doc.q, doc.k, doc.d, doc.nodes.priors.clone(), cs)
    }

    /// Structured-text form; floats are written in shortest round-trip form, so
    /// reading back is bit-exact.
    pub fn to_text(&self) -> String {
        toml::to_string(&self.to_doc()).expect("graph serializes")
    }

    pub fn from_text(s: &str) -> Result<FactorGraph> {
        let doc: GraphDoc = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_doc(&doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDoc {
    pub q: usize,
    pub k: usize,
    pub d: usize,
    pub nodes: NodesDoc,
    pub constraints: ConstraintsDoc,
    pub pairing: PairingDoc,
    pub weights: WeightsDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodesDoc {
    pub n: usize,
    pub priors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintsDoc {
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingDoc {
    /// Per constraint, per slot: `[variable, clone]`.
    pub clones: Vec<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsDoc {
    pub tables: Vec<Vec<f64>>,
}

/// One variable with unpaired clones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CavityEntry {
    pub var: usize,
    /// Unpaired clone indices.
    pub unpaired: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CavitySet {
    pub entries: Vec<CavityEntry>,
}

impl CavitySet {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Total number of unpaired clones.
    pub fn clone_count(&self) -> usize {
        self.entries.iter().map(|e| e.unpaired.len()).sum()
    }
}

/// Result of [`carve_cavities`].
#[derive(Debug, Clone)]
pub struct Carved {
    pub graph: FactorGraph,
    pub cavities: CavitySet,
    /// Removed variables (labels of the input graph).
    pub removed_vars: Vec<usize>,
    /// Constraints removed because they touched a removed variable.
    pub removed_adjacent: Vec<usize>,
    /// Additional constraints removed at random.
    pub removed_extra: Vec<usize>,
    /// Input label of each surviving variable.
    pub var_map: Vec<usize>,
    /// Input label of each surviving constraint.
    pub constraint_map: Vec<usize>,
}

/// Uniformly random pairing of the `k·m` constraint clones with the `d·n`
/// variable clones: entry `a*k + j` holds the variable clone `v*d + h`.
pub fn sample_pairing<R: Rng + ?Sized>(n: usize, d: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dn = d * n;
    if k == 0 || dn % k != 0 {
        return Err(Error::Divisibility { k, dn });
    }
    let mut perm: Vec<usize> = (0..dn).collect();
    perm.shuffle(rng);
    Ok(perm)
}

/// Simplicity of a raw pairing, without building the graph.
pub fn pairing_is_simple(pairing: &[usize], d: usize, k: usize) -> bool {
    let mut seen = HashSet::with_capacity(pairing.len() / k);
    let mut vs = vec![0usize; k];
    for chunk in pairing.chunks(k) {
        for (slot, &c) in vs.iter_mut().zip(chunk) {
            *slot = c / d;
        }
        vs.sort_unstable();
        if vs.windows(2).any(|w| w[0] == w[1]) || !seen.insert(vs.clone()) {
            return false;
        }
    }
    true
}

/// Samples from the pairing model: weight functions first, then a uniform pairing.
pub fn sample_pairing_graph<R: Rng + ?Sized>(model: &Model, n: usize, rng: &mut R) -> Result<FactorGraph> {
    let (d, k) = (model.d(), model.k());
    if (d * n) % k != 0 {
        return Err(Error::Divisibility { k, dn: d * n });
    }
    let m = d * n / k;
    let weights: Vec<WeightFunction> = (0..m).map(|_| model.sample_weight_function(rng)).collect();
    let pairing = sample_pairing(n, d, k, rng)?;
    let constraints = weights
        .into_iter()
        .enumerate()
        .map(|(a, weight)| {
            let slots = &pairing[a * k..(a + 1) * k];
            Constraint {
                vars: slots.iter().map(|c| c / d).collect(),
                clones: slots.iter().map(|c| c % d).collect(),
                weight,
            }
        })
        .collect();
    FactorGraph::from_parts(model.q(), k, d, vec![model.prior().to_vec(); n], constraints)
}

/// Rejection-samples a simple graph.
pub fn sample_simple_graph<R: Rng + ?Sized>(
    model: &Model,
    n: usize,
    rng: &mut R,
    max_tries: usize,
) -> Result<FactorGraph> {
    for _ in 0..max_tries {
        let g = sample_pairing_graph(model, n, rng)?;
        if g.is_simple() {
            return Ok(g);
        }
    }
    Err(Error::RetryLimit(max_tries))
}

/// Random acyclic factor graph with `constraints` constraint nodes: each new
/// constraint attaches to one existing variable with a free clone and `k−1` new variables.
pub fn sample_tree<R: Rng + ?Sized>(model: &Model, constraints: usize, rng: &mut R) -> Result<FactorGraph> {
    let (k, d) = (model.k(), model.d());
    let mut degree = vec![0usize];
    let mut cs = Vec::with_capacity(constraints);
    for _ in 0..constraints {
        let open: Vec<usize> = (0..degree.len()).filter(|&v| degree[v] < d).collect();
        let anchor = open[rng.gen_range(0..open.len())];
        let mut vars = vec![anchor];
        degree[anchor] += 1;
        for _ in 1..k {
            vars.push(degree.len());
            degree.push(1);
        }
        vars.shuffle(rng);
        cs.push((vars, model.sample_weight_function(rng)));
    }
    let n = degree.len();
    FactorGraph::from_constraints(model.q(), k, d, vec![model.prior().to_vec(); n], cs)
}

/// Removes `x_count` uniformly random variables with their adjacent constraints,
/// then `y_count` uniformly random surviving constraints.
pub fn carve_cavities<R: Rng + ?Sized>(
    g: &FactorGraph,
    x_count: usize,
    y_count: usize,
    rng: &mut R,
) -> Result<Carved> {
    if x_count > g.n() {
        return Err(Error::OutOfRange(format!("cannot remove {x_count} of {} variables", g.n())));
    }
    let mut removed_vars = index::sample(rng, g.n(), x_count).into_vec();
    removed_vars.sort_unstable();
    let var_gone: HashSet<usize> = removed_vars.iter().copied().collect();
    let removed_adjacent: Vec<usize> = (0..g.m())
        .filter(|&a| g.constraint(a).vars.iter().any(|v| var_gone.contains(v)))
        .collect();
    let adj: HashSet<usize> = removed_adjacent.iter().copied().collect();
    let survivors: Vec<usize> = (0..g.m()).filter(|a| !adj.contains(a)).collect();
    if y_count > survivors.len() {
        return Err(Error::OutOfRange(format!(
            "cannot remove {y_count} of {} surviving constraints",
            survivors.len()
        )));
    }
    let mut removed_extra: Vec<usize> =
        index::sample(rng, survivors.len(), y_count).into_iter().map(|i| survivors[i]).collect();
    removed_extra.sort_unstable();
    let extra: HashSet<usize> = removed_extra.iter().copied().collect();

    let var_map: Vec<usize> = (0..g.n()).filter(|v| !var_gone.contains(v)).collect();
    let mut new_label = vec![usize::MAX; g.n()];
    for (i, &v) in var_map.iter().enumerate() {
        new_label[v] = i;
    }
    let constraint_map: Vec<usize> = survivors.iter().copied().filter(|a| !extra.contains(a)).collect();
    let cs = constraint_map
        .iter()
        .map(|&a| {
            let c = g.constraint(a);
            Constraint { vars: c.vars.iter().map(|&v| new_label[v]).collect(), clones: c.clones.clone(), weight: c.weight.clone() }
        })
        .collect();
    let priors = var_map.iter().map(|&v| g.prior(v).to_vec()).collect();
    let graph = FactorGraph::from_parts(g.q(), g.k(), g.d(), priors, cs)?;
    let cavities = graph.cavities();
    Ok(Carved { graph, cavities, removed_vars, removed_adjacent, removed_extra, var_map, constraint_map })
}

/// Draws `X, Y ~ Po(ω)` (clamped to the available nodes) and carves.
pub fn carve_poisson<R: Rng + ?Sized>(g: &FactorGraph, omega: f64, rng: &mut R) -> Result<Carved> {
    let draw = |rng: &mut R| -> Result<usize> {
        if omega <= 0.0 {
            return Ok(0);
        }
        let p = Poisson::new(omega).map_err(|e| Error::OutOfRange(e.to_string()))?;
        Ok(p.sample(rng) as usize)
    };
    let x = draw(rng)?.min(g.n());
    let y = draw(rng)?;
    // the surviving constraint count is known only after removing variables
    let first = carve_cavities(g, x, 0, rng)?;
    let y = y.min(first.graph.m());
    if y == 0 {
        return Ok(first);
    }
    let second = carve_cavities(&first.graph, 0, y, rng)?;
    Ok(Carved {
        cavities: second.cavities,
        removed_vars: first.removed_vars,
        removed_adjacent: first.removed_adjacent,
        removed_extra: second.removed_extra.iter().map(|&a| first.constraint_map[a]).collect(),
        var_map: first.var_map,
        constraint_map: second.constraint_map.iter().map(|&a| first.constraint_map[a]).collect(),
        graph: second.graph,
    })
}

/// Replaces the priors of the given variables by point masses.
pub fn pin_variables(g: &FactorGraph, assignments: &[(usize, usize)]) -> Result<FactorGraph> {
    let mut priors = g.priors().to_vec();
    for &(v, s) in assignments {
        if v >= g.n() || s >= g.q() {
            return Err(Error::OutOfRange(format!("pin ({v}, {s}) out of range")));
        }
        let mut p = vec![0.0; g.q()];
        p[s] = 1.0;
        priors[v] = p;
    }
    g.with_priors(priors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::rng_from_seed;

    fn potts() -> Model {
        Model::potts(2, 3, 1.0).unwrap()
    }

    #[test]
    fn two_variable_graph_is_a_triple_edge() {
        let g = sample_pairing_graph(&potts(), 2, &mut rng_from_seed(1)).unwrap();
        assert_eq!(g.m(), 3);
        assert!(!g.is_simple());
        assert!(matches!(sample_simple_graph(&potts(), 2, &mut rng_from_seed(1), 50), Err(Error::RetryLimit(50))));
    }

    #[test]
    fn degrees_are_full() {
        let m = Model::ksat(3, 3, 1.0).unwrap();
        let g = sample_pairing_graph(&m, 4, &mut rng_from_seed(2)).unwrap();
        assert_eq!(g.m(), 4);
        assert!((0..4).all(|v| g.degree(v) == 3));
        assert!(g.cavities().is_empty());
    }

    #[test]
    fn divisibility_checked() {
        let m = Model::ksat(3, 4, 1.0).unwrap();
        assert!(matches!(sample_pairing_graph(&m, 5, &mut rng_from_seed(0)), Err(Error::Divisibility { .. })));
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let a = sample_pairing_graph(&Model::kspin(2, 3, 1.0).unwrap(), 10, &mut rng_from_seed(4)).unwrap();
        let b = sample_pairing_graph(&Model::kspin(2, 3, 1.0).unwrap(), 10, &mut rng_from_seed(4)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn path_is_simple_and_acyclic() {
        let w = WeightFunction::constant(2, 2, 0.5).unwrap();
        let g = FactorGraph::from_constraints(2, 2, 3, vec![vec![1.0, 1.0]; 3], vec![(vec![0, 1], w.clone()), (vec![1, 2], w)])
            .unwrap();
        assert!(g.is_simple());
        assert!(g.is_acyclic());
        assert_eq!(g.cavities().clone_count(), 3 * 3 - 4);
    }

    #[test]
    fn carve_nothing_is_identity() {
        let g = sample_simple_graph(&potts(), 10, &mut rng_from_seed(3), 1000).unwrap();
        let c = carve_cavities(&g, 0, 0, &mut rng_from_seed(0)).unwrap();
        assert_eq!(c.graph, g);
        assert!(c.cavities.is_empty());
    }

    #[test]
    fn carve_one_variable_from_simple_graph() {
        let g = sample_simple_graph(&potts(), 10, &mut rng_from_seed(3), 1000).unwrap();
        let c = carve_cavities(&g, 1, 0, &mut rng_from_seed(1)).unwrap();
        assert_eq!(c.removed_adjacent.len(), 3);
        assert_eq!(c.graph.m(), g.m() - 3);
        assert!(c.cavities.len() <= 3);
        assert_eq!(c.cavities.clone_count(), 3);
    }

    #[test]
    fn carve_ksat_counts() {
        let m = Model::ksat(3, 3, 1.0).unwrap();
        let mut rng = rng_from_seed(11);
        let g = sample_simple_graph(&m, 9, &mut rng, 10_000).unwrap();
        for seed in 0..20 {
            let c = carve_cavities(&g, 1, 1, &mut rng_from_seed(seed)).unwrap();
            // the extra constraint never touches the removed variable
            let removed = c.removed_vars[0];
            let extra = g.constraint(c.removed_extra[0]);
            assert!(!extra.vars.contains(&removed));
            let mut touched: HashSet<usize> = HashSet::new();
            for &a in c.removed_adjacent.iter().chain(&c.removed_extra) {
                for &v in &g.constraint(a).vars {
                    if v != removed {
                        touched.insert(v);
                    }
                }
            }
            let expected: usize = c.removed_adjacent.iter().chain(&c.removed_extra)
                .map(|&a| g.constraint(a).vars.iter().filter(|&&v| v != removed).count())
                .sum();
            assert_eq!(c.cavities.clone_count(), expected);
            if touched.len() == 9 - 1 && expected == 9 {
                assert_eq!(c.cavities.clone_count(), 3 * 2 + 3);
            }
        }
    }

    #[test]
    fn carve_out_of_range() {
        let g = sample_pairing_graph(&potts(), 4, &mut rng_from_seed(0)).unwrap();
        assert!(carve_cavities(&g, 5, 0, &mut rng_from_seed(0)).is_err());
        assert!(carve_cavities(&g, 0, 7, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn pinning_sets_point_masses() {
        let g = sample_pairing_graph(&potts(), 4, &mut rng_from_seed(0)).unwrap();
        assert_eq!(pin_variables(&g, &[]).unwrap(), g);
        let p = pin_variables(&g, &[(2, 1)]).unwrap();
        assert_eq!(p.prior(2), &[0.0, 1.0]);
        assert_eq!(p.prior(1), g.prior(1));
    }

    #[test]
    fn text_round_trip() {
        let m = Model::kspin(3, 3, 0.9).unwrap();
        let g = sample_pairing_graph(&m, 6, &mut rng_from_seed(8)).unwrap();
        let back = FactorGraph::from_text(&g.to_text()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn raw_pairing_simplicity_agrees_with_graph() {
        let m = potts();
        for seed in 0..200 {
            let g = sample_pairing_graph(&m, 8, &mut rng_from_seed(seed)).unwrap();
            let pairing: Vec<usize> = g
                .constraints()
                .iter()
                .flat_map(|c| c.vars.iter().zip(&c.clones).map(|(v, h)| v * 3 + h).collect::<Vec<_>>())
                .collect();
            assert_eq!(pairing_is_simple(&pairing, 3, 2), g.is_simple());
        }
    }
}
