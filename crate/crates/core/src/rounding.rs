//! Rounding: the committable prefix range and the economic-dispatch sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::ForecastWindow;
use crate::dispatch::{economic_dispatch, DispatchProblem, DispatchUnit};
use crate::error::{Error, Result};
use crate::fleet::GeneratorSpec;
use crate::relaxation::RelaxStatus;
use crate::runtime::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub parallel: bool,
    /// Maximum number of prefixes evaluated per period.
    pub max_width: Option<usize>,
    /// Skip prefixes whose cost lower bound already exceeds the first one evaluated.
    pub prune: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            parallel: false,
            max_width: None,
            prune: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommitRange {
    /// Minimum committed count, must-run included.
    pub m: usize,
    pub m_max: usize,
    /// Reserve margin at the minimal prefix.
    pub reserve_r: f64,
    pub must_run: usize,
    /// No prefix meets the capacity target; everything is committed.
    pub capacity_short: bool,
    /// The floor constraint could not be respected at `m`.
    pub floor_violated: bool,
}

impl CommitRange {
    pub fn width(&self) -> usize {
        self.m_max + 1 - self.m
    }
}

/// Right-hand sides of the capacity and floor constraints before the reserve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeTargets {
    /// `d_max_72 + 3σ` (minus ramping capacity); the reserve is added per prefix.
    pub capacity: f64,
    /// `d_min_72 − σ` (minus ramping floor).
    pub floor: f64,
}

impl RangeTargets {
    pub fn from_window(fw: &ForecastWindow) -> Self {
        Self {
            capacity: fw.d_max_72 + 3.0 * fw.sigma_d,
            floor: fw.d_min_72 - fw.sigma_d,
        }
    }
}

/// Largest p_max among `units`.
pub fn reserve_margin(units: &[&GeneratorSpec]) -> Result<f64> {
    if units.is_empty() {
        return Err(Error::InvalidArgument("reserve margin of an empty set".into()));
    }
    Ok(units.iter().map(|g| g.p_max).fold(f64::NEG_INFINITY, f64::max))
}

/// Reserve margin of each growing prefix, seeded by the must-run maximum.
pub fn running_reserve(must_run_max: f64, prefix_p_max: &[f64]) -> Vec<f64> {
    let mut r = must_run_max;
    prefix_p_max
        .iter()
        .map(|&p| {
            r = r.max(p);
            r
        })
        .collect()
}

pub fn find_commit_range(
    ordered: &[usize],
    specs: &[GeneratorSpec],
    must_run: &[usize],
    fw: &ForecastWindow,
) -> CommitRange {
    find_commit_range_with(ordered, specs, must_run, RangeTargets::from_window(fw))
}

/// Prefix range for explicit targets. `ordered` and `must_run` index `specs`.
pub fn find_commit_range_with(
    ordered: &[usize],
    specs: &[GeneratorSpec],
    must_run: &[usize],
    targets: RangeTargets,
) -> CommitRange {
    let limits = |idx: &[usize]| -> Vec<(f64, f64)> {
        idx.iter().map(|&i| (specs[i].p_max, specs[i].p_min)).collect()
    };
    commit_range(&limits(ordered), &limits(must_run), targets)
}

/// Prefix range over `(p_max, p_min)` pairs: `ordered` in sweep order.
pub fn commit_range(ordered: &[(f64, f64)], must_run: &[(f64, f64)], targets: RangeTargets) -> CommitRange {
    let mr = must_run.len();
    let cap_m: f64 = must_run.iter().map(|u| u.0).sum();
    let min_m: f64 = must_run.iter().map(|u| u.1).sum();
    let r_m = must_run.iter().map(|u| u.0).fold(0.0, f64::max);

    let mut m_tilde = None;
    let mut cap = cap_m;
    let mut r = r_m;
    if cap >= targets.capacity + r {
        m_tilde = Some(0);
    } else {
        for (k, u) in ordered.iter().enumerate() {
            cap += u.0;
            r = r.max(u.0);
            if cap >= targets.capacity + r {
                m_tilde = Some(k + 1);
                break;
            }
        }
    }
    let capacity_short = m_tilde.is_none();
    let m_tilde = m_tilde.unwrap_or(ordered.len());
    let reserve_r = ordered[..m_tilde].iter().map(|u| u.0).fold(r_m, f64::max);

    let mut floor = min_m;
    let mut max_tilde = 0;
    let mut floor_violated = floor > targets.floor;
    if !floor_violated {
        for (k, u) in ordered.iter().enumerate() {
            floor += u.1;
            if floor > targets.floor {
                break;
            }
            max_tilde = k + 1;
        }
    }
    let m = mr + m_tilde;
    let mut m_max = mr + max_tilde;
    if m > m_max {
        m_max = m;
        floor_violated = true;
    }
    CommitRange {
        m,
        m_max,
        reserve_r,
        must_run: mr,
        capacity_short,
        floor_violated,
    }
}

/// One candidate in the ordered sweep list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepUnit {
    /// Dispatch bounds and the fixed charge when the unit is in the prefix.
    pub on: DispatchUnit,
    /// Whether an in-prefix unit is dispatched this period (false for starts
    /// that only enter preparation).
    pub dispatchable: bool,
    /// Charge when the unit is left out of the prefix.
    pub off_penalty: f64,
    /// Supply delivered when left out (first ramp-down period).
    pub off_supply: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Optimal,
    /// No prefix was dispatchable; everything committed at full output.
    Emergency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    /// Committed count, must-run included.
    pub k_selected: usize,
    pub must_run_outputs: Vec<f64>,
    /// Output per ordered candidate; zero outside the prefix or when not dispatchable.
    pub candidate_outputs: Vec<f64>,
    pub objective: f64,
    pub lambda: f64,
    pub evaluated: usize,
    pub status: SweepStatus,
    /// Unserved demand, MW (emergency only).
    pub shortfall: f64,
}

struct Evaluation {
    k: usize,
    objective: f64,
    lambda: f64,
    outputs: Vec<f64>,
}

/// Sweep context shared by every prefix evaluation.
struct Sweep<'a> {
    must_run: &'a [DispatchUnit],
    ordered: &'a [SweepUnit],
    demand: f64,
}

impl Sweep<'_> {
    fn demand_at(&self, prefix: usize) -> f64 {
        let fallback: f64 = self.ordered[prefix..].iter().map(|u| u.off_supply).sum();
        (self.demand - fallback).max(0.0)
    }

    fn fixed_at(&self, prefix: usize) -> f64 {
        let inside: f64 = self.ordered[..prefix]
            .iter()
            .map(|u| u.on.start_penalty + if u.dispatchable { u.on.cost.c } else { 0.0 })
            .sum();
        let outside: f64 = self.ordered[prefix..].iter().map(|u| u.off_penalty).sum();
        inside + outside + self.must_run.iter().map(|u| u.cost.c + u.start_penalty).sum::<f64>()
    }

    fn evaluate(&self, prefix: usize) -> Result<Option<Evaluation>> {
        let mut units: Vec<DispatchUnit> = self.must_run.to_vec();
        let mut slot = Vec::with_capacity(prefix);
        for u in &self.ordered[..prefix] {
            if u.dispatchable {
                slot.push(Some(units.len()));
                units.push(u.on);
            } else {
                slot.push(None);
            }
        }
        let demand = self.demand_at(prefix);
        let extra: f64 = self.ordered[..prefix]
            .iter()
            .filter(|u| !u.dispatchable)
            .map(|u| u.on.start_penalty)
            .sum::<f64>()
            + self.ordered[prefix..].iter().map(|u| u.off_penalty).sum::<f64>();
        let (dispatch_objective, lambda, outputs) = if units.is_empty() {
            if demand > 0.0 {
                return Ok(None);
            }
            (0.0, 0.0, Vec::new())
        } else {
            let d = economic_dispatch(&DispatchProblem { units, demand })?;
            if !d.feasible {
                return Ok(None);
            }
            (d.objective, d.lambda, d.outputs)
        };
        let mr = self.must_run.len();
        let mut full = outputs[..mr].to_vec();
        for s in &slot {
            full.push(s.map(|j| outputs[j]).unwrap_or(0.0));
        }
        Ok(Some(Evaluation {
            k: mr + prefix,
            objective: dispatch_objective + extra,
            lambda,
            outputs: full,
        }))
    }

    /// Variable-cost lower bound valid for every prefix: all dispatchable units
    /// available from zero output, no fixed charges, smallest demand target.
    fn variable_lower_bound(&self) -> Result<Option<f64>> {
        let relaxed: Vec<DispatchUnit> = self
            .must_run
            .iter()
            .copied()
            .chain(self.ordered.iter().filter(|u| u.dispatchable).map(|u| u.on))
            .map(|u| {
                let mut cost = u.cost;
                cost.c = 0.0;
                DispatchUnit::new(cost, 0.0, u.upper, 0.0)
            })
            .collect();
        if relaxed.is_empty() || relaxed.iter().any(|u| u.cost.b < 0.0) {
            return Ok(None);
        }
        let demand = self.demand_at(0).min(self.demand_at(self.ordered.len()));
        let d = economic_dispatch(&DispatchProblem {
            units: relaxed,
            demand,
        })?;
        Ok(d.feasible.then_some(d.objective))
    }
}

fn better(a: &Evaluation, b: &Evaluation) -> bool {
    a.objective < b.objective || (a.objective == b.objective && a.k < b.k)
}

/// Evaluates every prefix in `range` and keeps the cheapest feasible one.
///
/// `ordered` holds the discretionary candidates in sweep order; the prefix of
/// length `k − |must_run|` is committed. Results are reduced by
/// `(objective, k)`, so parallel and sequential runs agree exactly.
pub fn sweep_dispatch(
    must_run: &[DispatchUnit],
    ordered: &[SweepUnit],
    demand: f64,
    range: &CommitRange,
    config: &SweepConfig,
) -> Result<SweepOutcome> {
    let mr = must_run.len();
    if range.m < mr || range.m > range.m_max || range.m_max > mr + ordered.len() {
        return Err(Error::InvalidArgument(format!(
            "commit range [{}, {}] does not fit {} must-run + {} candidates",
            range.m,
            range.m_max,
            mr,
            ordered.len()
        )));
    }
    let sweep = Sweep {
        must_run,
        ordered,
        demand,
    };
    let last = match config.max_width {
        Some(w) if w > 0 => range.m_max.min(range.m + w - 1),
        _ => range.m_max,
    };
    let prefixes: Vec<usize> = (range.m - mr..=last - mr).collect();

    let first = sweep.evaluate(prefixes[0])?;
    let mut evaluated = 1;
    let rest: Vec<usize> = match (&first, config.prune) {
        (Some(best), true) => match sweep.variable_lower_bound()? {
            Some(lb) => prefixes[1..]
                .iter()
                .copied()
                .filter(|&p| lb + sweep.fixed_at(p) <= best.objective)
                .collect(),
            None => prefixes[1..].to_vec(),
        },
        _ => prefixes[1..].to_vec(),
    };
    evaluated += rest.len();

    let results: Vec<Option<Evaluation>> = if config.parallel {
        rest.par_iter()
            .map(|&p| sweep.evaluate(p))
            .collect::<Result<Vec<_>>>()?
    } else {
        rest.iter()
            .map(|&p| sweep.evaluate(p))
            .collect::<Result<Vec<_>>>()?
    };
    let mut best = first;
    for r in results.into_iter().flatten() {
        if best.as_ref().map_or(true, |b| better(&r, b)) {
            best = Some(r);
        }
    }

    match best {
        Some(best) => {
            let candidate_outputs = best.outputs[mr..]
                .iter()
                .copied()
                .chain(std::iter::repeat(0.0))
                .take(ordered.len())
                .collect();
            Ok(SweepOutcome {
                k_selected: best.k,
                must_run_outputs: best.outputs[..mr].to_vec(),
                candidate_outputs,
                objective: best.objective,
                lambda: best.lambda,
                evaluated,
                status: SweepStatus::Optimal,
                shortfall: 0.0,
            })
        }
        None => Ok(emergency(&sweep, evaluated)),
    }
}

/// Commit every candidate at its upper bound.
fn emergency(sweep: &Sweep, evaluated: usize) -> SweepOutcome {
    let must_run_outputs: Vec<f64> = sweep.must_run.iter().map(|u| u.upper).collect();
    let candidate_outputs: Vec<f64> = sweep
        .ordered
        .iter()
        .map(|u| if u.dispatchable { u.on.upper } else { 0.0 })
        .collect();
    let supplied: f64 = must_run_outputs.iter().sum::<f64>() + candidate_outputs.iter().sum::<f64>();
    let objective = sweep
        .must_run
        .iter()
        .zip(&must_run_outputs)
        .map(|(u, &p)| u.cost.eval(p) + u.start_penalty)
        .sum::<f64>()
        + sweep
            .ordered
            .iter()
            .zip(&candidate_outputs)
            .map(|(u, &p)| {
                u.on.start_penalty + if u.dispatchable { u.on.cost.eval(p) } else { 0.0 }
            })
            .sum::<f64>();
    let n = sweep.must_run.len() + sweep.ordered.len();
    SweepOutcome {
        k_selected: n,
        must_run_outputs,
        candidate_outputs,
        objective,
        lambda: f64::NAN,
        evaluated,
        status: SweepStatus::Emergency,
        shortfall: (sweep.demand_at(sweep.ordered.len()) - supplied).max(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub relax_status: RelaxStatus,
    pub relax_kkt: f64,
    pub sweep_width: usize,
    pub evaluated: usize,
    pub capacity_short: bool,
    pub floor_violated: bool,
    pub emergency: bool,
    pub shortfall: f64,
}

/// Outcome of one period for the whole fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodDecision {
    pub period: usize,
    /// Stage of each unit after the decision.
    pub stages: Vec<Stage>,
    /// `u`: dispatched at a controllable output this period.
    pub committed: Vec<bool>,
    /// `v`: entered a start sequence this period.
    pub starting: Vec<bool>,
    /// `w`: entered ramp-down this period.
    pub stopping: Vec<bool>,
    /// MW per unit, ramping output included.
    pub outputs: Vec<f64>,
    pub demand: f64,
    pub objective: f64,
    pub k_selected: usize,
    pub diagnostics: Diagnostics,
}
