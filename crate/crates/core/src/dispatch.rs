//! Economic dispatch of a fixed committed set by marginal-price search.
//!
//! With quadratic costs and box bounds each unit's output at a marginal
//! price λ is `clamp((λ − b)/(2a), lower, upper)`. Total supply is monotone in
//! λ, so the clearing price is bracketed and found by a safeguarded
//! false-position/bisection search. Units with `a = 0` have step supply
//! curves; whatever residual is left at the clearing price is assigned to
//! those marginal linear units in index order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fleet::CostCurve;

const MAX_ITERATIONS: usize = 200;
const INTERVAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchUnit {
    pub cost: CostCurve,
    pub lower: f64,
    pub upper: f64,
    /// Fixed $ added to the objective when this unit is dispatched.
    pub start_penalty: f64,
}

impl DispatchUnit {
    pub fn new(cost: CostCurve, lower: f64, upper: f64, start_penalty: f64) -> Self {
        Self {
            cost,
            lower,
            upper,
            start_penalty,
        }
    }

    /// Output at marginal price `lambda`; linear units sit at `lower` on a tie.
    #[inline]
    pub fn supply(&self, lambda: f64) -> f64 {
        let a = self.cost.a;
        if a > 0.0 {
            ((lambda - self.cost.b) / (2.0 * a)).clamp(self.lower, self.upper)
        } else if lambda > self.cost.b {
            self.upper
        } else {
            self.lower
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchProblem {
    pub units: Vec<DispatchUnit>,
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub outputs: Vec<f64>,
    /// Clearing marginal cost, $/MWh (per period when costs are per period).
    pub lambda: f64,
    pub objective: f64,
    pub feasible: bool,
}

fn total_supply(units: &[DispatchUnit], lambda: f64) -> f64 {
    units.iter().map(|u| u.supply(lambda)).sum()
}

fn objective(units: &[DispatchUnit], outputs: &[f64]) -> f64 {
    units
        .iter()
        .zip(outputs)
        .map(|(u, &p)| u.cost.eval(p) + u.start_penalty)
        .sum()
}

pub fn economic_dispatch(problem: &DispatchProblem) -> Result<Dispatch> {
    let units = &problem.units;
    if units.is_empty() {
        return Err(Error::InvalidArgument("economic dispatch needs at least one unit".into()));
    }
    let demand = problem.demand;
    if !(demand.is_finite() && demand >= 0.0) {
        return Err(Error::InvalidArgument(format!("demand must be >= 0, got {demand}")));
    }
    if let Some(u) = units.iter().find(|u| !(u.lower <= u.upper)) {
        return Err(Error::InvalidArgument(format!(
            "unit bounds [{}, {}] are inverted",
            u.lower, u.upper
        )));
    }

    let sum_lower: f64 = units.iter().map(|u| u.lower).sum();
    let sum_upper: f64 = units.iter().map(|u| u.upper).sum();

    if sum_upper < demand {
        let outputs: Vec<f64> = units.iter().map(|u| u.upper).collect();
        let lambda = units
            .iter()
            .map(|u| u.cost.marginal(u.upper))
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok(Dispatch {
            objective: objective(units, &outputs),
            outputs,
            lambda,
            feasible: false,
        });
    }
    if sum_lower >= demand {
        let outputs: Vec<f64> = units.iter().map(|u| u.lower).collect();
        return Ok(Dispatch {
            objective: objective(units, &outputs),
            outputs,
            lambda: 0.0,
            feasible: true,
        });
    }

    let target = demand;
    let mut lo = units.iter().map(|u| u.cost.b).fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = units
        .iter()
        .map(|u| u.cost.marginal(u.upper))
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    let mut f_lo = total_supply(units, lo) - target;
    let mut f_hi = total_supply(units, hi) - target;
    let mut exact = None;
    let mut last_side = 0i8;

    for iter in 0..MAX_ITERATIONS {
        if hi - lo <= INTERVAL_TOL * lo.abs().max(hi.abs()).max(1.0) {
            break;
        }
        let mut x = hi - f_hi * (hi - lo) / (f_hi - f_lo);
        // every third step is a plain bisection so the bracket always halves
        if !(x > lo && x < hi) || iter % 3 == 2 {
            x = 0.5 * (lo + hi);
        }
        let fx = total_supply(units, x) - target;
        if fx == 0.0 {
            exact = Some(x);
            break;
        }
        if fx < 0.0 {
            lo = x;
            f_lo = fx;
            if last_side == -1 {
                f_hi *= 0.5;
            }
            last_side = -1;
        } else {
            hi = x;
            f_hi = fx;
            if last_side == 1 {
                f_lo *= 0.5;
            }
            last_side = 1;
        }
    }

    let lambda = exact.unwrap_or(hi);
    let band = (hi - lo).max(INTERVAL_TOL * lambda.abs().max(1.0));
    let mut outputs = Vec::with_capacity(units.len());
    let mut marginal = Vec::new();
    for (j, u) in units.iter().enumerate() {
        if u.cost.a > 0.0 {
            outputs.push(u.supply(lambda));
        } else if u.cost.b < lambda - band {
            outputs.push(u.upper);
        } else if u.cost.b > lambda + band {
            outputs.push(u.lower);
        } else {
            outputs.push(u.lower);
            marginal.push(j);
        }
    }
    let mut residual = target - outputs.iter().sum::<f64>();
    for j in marginal {
        if residual <= 0.0 {
            break;
        }
        let room = units[j].upper - outputs[j];
        let add = room.min(residual);
        outputs[j] += add;
        residual -= add;
    }

    Ok(Dispatch {
        objective: objective(units, &outputs),
        outputs,
        lambda,
        feasible: true,
    })
}

/// Checks the first-order optimality conditions of a dispatch.
///
/// Every unit must either have marginal cost equal to λ or sit at a bound
/// with the bound multiplier correctly signed, and supply must match
/// `max(demand, Σ lower)`; all within `tol` relative.
pub fn verify_kkt_dispatch(problem: &DispatchProblem, dispatch: &Dispatch, tol: f64) -> bool {
    if !dispatch.feasible || dispatch.outputs.len() != problem.units.len() {
        return false;
    }
    let lambda = dispatch.lambda;
    let price_tol = tol * lambda.abs().max(1.0);
    if lambda < -price_tol {
        return false;
    }
    for (u, &p) in problem.units.iter().zip(&dispatch.outputs) {
        let bound_tol = tol * u.upper.abs().max(1.0);
        if p < u.lower - bound_tol || p > u.upper + bound_tol {
            return false;
        }
        let mc = u.cost.marginal(p);
        let at_lower = p <= u.lower + bound_tol;
        let at_upper = p >= u.upper - bound_tol;
        let ok = match (at_lower, at_upper) {
            (true, true) => true,
            (true, false) => mc >= lambda - price_tol,
            (false, true) => mc <= lambda + price_tol,
            (false, false) => (mc - lambda).abs() <= price_tol,
        };
        if !ok {
            return false;
        }
    }
    let sum_lower: f64 = problem.units.iter().map(|u| u.lower).sum();
    let target = problem.demand.max(sum_lower);
    let supplied: f64 = dispatch.outputs.iter().sum();
    (supplied - target).abs() <= tol * target.max(1.0)
}
