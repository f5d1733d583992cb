//! Linear-programming helpers on top of `minilp`: transport problems and
//! min-max couplings solved by constraint generation.

use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Variable};

use crate::error::{Error, Result};

fn lp_err(e: minilp::Error) -> Error {
    Error::Lp(e.to_string())
}

fn coupling_problem(
    supply: &[f64],
    demand: &[f64],
    cost: Option<&[f64]>,
    extra_var_cost: Option<f64>,
) -> (Problem, Vec<Variable>, Option<Variable>) {
    let (ns, nt) = (supply.len(), demand.len());
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = (0..ns * nt)
        .map(|i| p.add_var(cost.map_or(0.0, |c| c[i]), (0.0, f64::INFINITY)))
        .collect();
    let extra = extra_var_cost.map(|c| p.add_var(c, (f64::NEG_INFINITY, f64::INFINITY)));
    for (s, &mass) in supply.iter().enumerate() {
        let mut e = LinearExpr::empty();
        for t in 0..nt {
            e.add(vars[s * nt + t], 1.0);
        }
        p.add_constraint(e, ComparisonOp::Eq, mass);
    }
    // The last demand constraint is implied up to rounding; dropping it keeps the LP feasible.
    for (t, &mass) in demand.iter().enumerate().take(nt.saturating_sub(1)) {
        let mut e = LinearExpr::empty();
        for s in 0..ns {
            e.add(vars[s * nt + t], 1.0);
        }
        p.add_constraint(e, ComparisonOp::Eq, mass);
    }
    (p, vars, extra)
}

/// Optimal transport between `supply` and `demand` for a row-major cost matrix.
/// Returns the optimal cost and the plan.
pub(crate) fn transport(cost: &[f64], supply: &[f64], demand: &[f64]) -> Result<(f64, Vec<f64>)> {
    assert_eq!(cost.len(), supply.len() * demand.len());
    let (p, vars, _) = coupling_problem(supply, demand, Some(cost), None);
    let sol = p.solve().map_err(lp_err)?;
    let plan: Vec<f64> = vars.iter().map(|&v| sol[v].max(0.0)).collect();
    let value = plan.iter().zip(cost).map(|(g, c)| g * c).sum();
    Ok((value, plan))
}

/// Result of a min-max coupling search.
pub(crate) struct Minimax {
    /// Best value found for an actual coupling (an upper bound on the min-max).
    pub upper: f64,
    /// Value of the final relaxation (a lower bound on the min-max).
    pub lower: f64,
}

/// Minimizes over couplings of `supply` and `demand` the maximum of a family of
/// linear functionals. `oracle(plan)` must return the maximum value over the
/// family at `plan` and the coefficient vector of a maximizing functional.
pub(crate) fn minimax_coupling<F>(supply: &[f64], demand: &[f64], mut oracle: F) -> Result<Minimax>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (ns, nt) = (supply.len(), demand.len());
    let mut plan: Vec<f64> = (0..ns * nt).map(|i| supply[i / nt] * demand[i % nt]).collect();
    let (mut upper, coeffs) = oracle(&plan);
    let (mut p, vars, t) = coupling_problem(supply, demand, None, Some(1.0));
    let t = t.expect("epigraph variable");
    let cut = |coeffs: &[f64]| {
        let mut e = LinearExpr::empty();
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                e.add(vars[i], c);
            }
        }
        e.add(t, -1.0);
        e
    };
    // the first cut bounds the epigraph variable from below
    p.add_constraint(cut(&coeffs), ComparisonOp::Le, 0.0);
    let mut sol = p.solve().map_err(lp_err)?;
    let mut lower;
    let mut iter = 0;
    loop {
        lower = sol[t];
        plan = vars.iter().map(|&v| sol[v].max(0.0)).collect();
        let (value, c) = oracle(&plan);
        if value < upper {
            upper = value;
        }
        iter += 1;
        if value <= lower + 1e-13 || iter >= 2000 {
            break;
        }
        sol = sol.add_constraint(cut(&c), ComparisonOp::Le, 0.0).map_err(lp_err)?;
    }
    Ok(Minimax { upper, lower: lower.min(upper) })
}
