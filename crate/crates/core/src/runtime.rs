//! Runtime-constrained commitment: unit state tracking, classification,
//! switching penalties and the per-period relax-and-round step.

use serde::{Deserialize, Serialize};

use crate::dispatch::DispatchUnit;
use crate::error::Result;
use crate::fleet::{CostCurve, GeneratorSpec, StartType};
use crate::ramp::RampProfile;
use crate::relaxation::{
    order_candidates, solve_relaxed, MustRunUnit, RelaxConfig, RelaxStatus, RelaxedProblem, RelaxedUnit,
};
use crate::rounding::{
    commit_range, sweep_dispatch, CommitRange, Diagnostics, PeriodDecision, RangeTargets, SweepConfig,
    SweepStatus, SweepUnit,
};
use crate::sim::System;

pub const MINUTES_PER_DAY: u64 = 24 * 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Off,
    Prepare,
    RampUp,
    On,
    RampDown,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Off, Stage::Prepare, Stage::RampUp, Stage::On, Stage::RampDown];

    pub fn is_ramping(self) -> bool {
        matches!(self, Stage::Prepare | Stage::RampUp | Stage::RampDown)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Off => "off",
            Stage::Prepare => "prepare",
            Stage::RampUp => "ramp_up",
            Stage::On => "on",
            Stage::RampDown => "ramp_down",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorState {
    pub stage: Stage,
    /// Periods spent in the current stage, the current period included.
    pub stage_age: u32,
    pub prev_output: f64,
    /// Minutes in the on stage since it was last reached.
    pub on_duration: f64,
    /// Minutes since the unit last left the on stage.
    pub off_duration: f64,
    /// Start times, absolute minutes, pruned to the trailing 24 h.
    pub start_log: Vec<u64>,
    /// Stage durations of the ramp sequence in progress.
    pub profile: Option<RampProfile>,
}

impl GeneratorState {
    pub fn off(off_duration: f64) -> Self {
        Self {
            stage: Stage::Off,
            stage_age: 1,
            prev_output: 0.0,
            on_duration: 0.0,
            off_duration,
            start_log: Vec::new(),
            profile: None,
        }
    }

    /// Starts within the 24 h window ending at `now` (exclusive of older entries).
    pub fn starts_in_window(&self, now: u64) -> usize {
        self.start_log
            .iter()
            .filter(|&&s| s <= now && now - s < MINUTES_PER_DAY)
            .count()
    }

    pub fn prune_log(&mut self, now: u64) {
        self.start_log.retain(|&s| now.saturating_sub(s) < MINUTES_PER_DAY);
    }
}

/// Off-duration thresholds separating hot, warm and cold starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartThresholds {
    pub hot_below_hours: f64,
    pub warm_below_hours: f64,
}

impl Default for StartThresholds {
    fn default() -> Self {
        Self {
            hot_below_hours: 8.0,
            warm_below_hours: 48.0,
        }
    }
}

impl StartThresholds {
    pub fn start_type(&self, off_minutes: f64) -> StartType {
        let hours = off_minutes / 60.0;
        if hours < self.hot_below_hours {
            StartType::Hot
        } else if hours < self.warm_below_hours {
            StartType::Warm
        } else {
            StartType::Cold
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub must_run: Vec<usize>,
    pub discretionary: Vec<usize>,
    pub excluded: Vec<usize>,
}

/// Runtime-model classification at absolute minute `now`.
pub fn classify_generators(states: &[GeneratorState], specs: &[GeneratorSpec], now: u64) -> Classification {
    let mut c = Classification::default();
    for (i, (s, g)) in states.iter().zip(specs).enumerate() {
        if s.stage == Stage::On && s.on_duration < g.min_runtime {
            c.must_run.push(i);
        } else if s.stage == Stage::Off && s.starts_in_window(now) >= g.max_daily_starts as usize {
            c.excluded.push(i);
        } else {
            c.discretionary.push(i);
        }
    }
    c
}

/// Switching penalty `K`: mean of the start cost and the shutdown cost.
/// Units currently on are charged at the hot start cost.
pub fn startup_penalty(spec: &GeneratorSpec, state: &GeneratorState, thresholds: &StartThresholds) -> f64 {
    let kind = if state.stage == Stage::On {
        StartType::Hot
    } else {
        thresholds.start_type(state.off_duration)
    };
    0.5 * (spec.start_costs.get(kind) + spec.shutdown_cost)
}

/// One unit offered to the single-period runtime problem.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub spec: &'a GeneratorSpec,
    /// Cost curve in the objective's units (per period in simulations).
    pub cost: CostCurve,
    pub was_on: bool,
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeOutcome {
    /// Commitment of each discretionary candidate.
    pub committed: Vec<bool>,
    pub discretionary_outputs: Vec<f64>,
    pub must_run_outputs: Vec<f64>,
    pub objective: f64,
    pub k_selected: usize,
    /// Sweep order as indices into the discretionary candidates.
    pub order: Vec<usize>,
    pub range: CommitRange,
    pub diagnostics: Diagnostics,
}

/// Relax, order, bound and sweep one runtime-model period.
///
/// `targets.capacity` excludes the reserve; the relaxation adds the largest
/// admissible p_max, the range finder the per-prefix maximum.
pub fn solve_runtime_period(
    must_run: &[Candidate],
    discretionary: &[Candidate],
    demand: f64,
    targets: RangeTargets,
    relax: &RelaxConfig,
    sweep: &SweepConfig,
) -> Result<RuntimeOutcome> {
    let reserve = must_run
        .iter()
        .chain(discretionary)
        .map(|c| c.spec.p_max)
        .fold(0.0, f64::max);
    let problem = RelaxedProblem {
        units: discretionary
            .iter()
            .map(|c| RelaxedUnit {
                cost: c.cost,
                p_lo: c.spec.p_min,
                p_hi: c.spec.p_max,
                has_output: true,
                anchor: if c.was_on { 1.0 } else { 0.0 },
                switch_penalty: c.penalty,
                score_cost: 0.0,
                fallback_supply: 0.0,
                cap_max: c.spec.p_max,
                cap_min: c.spec.p_min,
            })
            .collect(),
        must_run: must_run
            .iter()
            .map(|c| MustRunUnit {
                cost: c.cost,
                p_lo: c.spec.p_min,
                p_hi: c.spec.p_max,
            })
            .collect(),
        demand,
        capacity_rhs: targets.capacity + reserve,
        floor_rhs: targets.floor,
        must_run_p_max: must_run.iter().map(|c| c.spec.p_max).sum(),
        must_run_p_min: must_run.iter().map(|c| c.spec.p_min).sum(),
    };
    let relaxed = solve_relaxed(&problem, relax);
    if relaxed.status == RelaxStatus::NotConverged {
        log::warn!(
            "relaxation stopped at kkt residual {:.2e}; using priority order",
            relaxed.kkt_residual
        );
    }
    let specs: Vec<&GeneratorSpec> = discretionary.iter().map(|c| c.spec).collect();
    let order = order_candidates(&relaxed.y, &specs, !relaxed.usable());

    let limits = |c: &Candidate| (c.spec.p_max, c.spec.p_min);
    let ordered_limits: Vec<(f64, f64)> = order.iter().map(|&i| limits(&discretionary[i])).collect();
    let must_limits: Vec<(f64, f64)> = must_run.iter().map(limits).collect();
    let range = commit_range(&ordered_limits, &must_limits, targets);

    let must_units: Vec<DispatchUnit> = must_run
        .iter()
        .map(|c| DispatchUnit::new(c.cost, c.spec.p_min, c.spec.p_max, 0.0))
        .collect();
    let ordered_units: Vec<SweepUnit> = order
        .iter()
        .map(|&i| {
            let c = &discretionary[i];
            let start = if c.was_on { 0.0 } else { c.penalty };
            SweepUnit {
                on: DispatchUnit::new(c.cost, c.spec.p_min, c.spec.p_max, start),
                dispatchable: true,
                off_penalty: 0.0,
                off_supply: 0.0,
            }
        })
        .collect();
    let out = sweep_dispatch(&must_units, &ordered_units, demand, &range, sweep)?;

    let prefix = out.k_selected - must_run.len();
    let mut committed = vec![false; discretionary.len()];
    let mut discretionary_outputs = vec![0.0; discretionary.len()];
    for (pos, &i) in order.iter().enumerate() {
        committed[i] = pos < prefix;
        discretionary_outputs[i] = out.candidate_outputs[pos];
    }
    let emergency = out.status == SweepStatus::Emergency;
    Ok(RuntimeOutcome {
        committed,
        discretionary_outputs,
        must_run_outputs: out.must_run_outputs,
        objective: out.objective,
        k_selected: out.k_selected,
        order,
        range,
        diagnostics: Diagnostics {
            relax_status: relaxed.status,
            relax_kkt: relaxed.kkt_residual,
            sweep_width: range.width(),
            evaluated: out.evaluated,
            capacity_short: range.capacity_short,
            floor_violated: range.floor_violated,
            emergency,
            shortfall: out.shortfall,
        },
    })
}

/// One period of the runtime model; updates `system.states` in place.
pub fn step_runtime_uc(system: &mut System, t: usize) -> Result<PeriodDecision> {
    let dt = system.trace.dt;
    let now = t as u64 * dt as u64;
    for s in system.states.iter_mut() {
        s.prune_log(now);
    }
    let specs = &system.fleet.generators;
    let class = classify_generators(&system.states, specs, now);
    let fw = system.forecast(t)?;
    let thresholds = &system.config.start_thresholds;
    let candidate = |i: usize| Candidate {
        spec: &specs[i],
        cost: system.costs[i],
        was_on: system.states[i].stage == Stage::On,
        penalty: startup_penalty(&specs[i], &system.states[i], thresholds),
    };
    let must: Vec<Candidate> = class.must_run.iter().map(|&i| candidate(i)).collect();
    let disc: Vec<Candidate> = class.discretionary.iter().map(|&i| candidate(i)).collect();
    let outcome = solve_runtime_period(
        &must,
        &disc,
        fw.d_now,
        RangeTargets::from_window(&fw),
        &system.config.relax,
        &system.config.sweep,
    )?;

    let n = specs.len();
    let mut committed = vec![false; n];
    let mut outputs = vec![0.0; n];
    for (j, &i) in class.must_run.iter().enumerate() {
        committed[i] = true;
        outputs[i] = outcome.must_run_outputs[j];
    }
    for (j, &i) in class.discretionary.iter().enumerate() {
        committed[i] = outcome.committed[j];
        outputs[i] = outcome.discretionary_outputs[j];
    }

    let dtf = dt as f64;
    for (i, s) in system.states.iter_mut().enumerate() {
        let was_on = s.stage == Stage::On;
        if committed[i] {
            if !was_on {
                s.start_log.push(now);
                s.on_duration = 0.0;
                s.stage = Stage::On;
                s.stage_age = 0;
            }
            s.on_duration += dtf;
            s.off_duration = 0.0;
        } else {
            if was_on {
                s.off_duration = 0.0;
                s.stage = Stage::Off;
                s.stage_age = 0;
            }
            s.off_duration += dtf;
            s.on_duration = 0.0;
        }
        s.stage_age += 1;
        s.prev_output = outputs[i];
    }

    Ok(PeriodDecision {
        period: t,
        stages: system.states.iter().map(|s| s.stage).collect(),
        committed,
        starting: vec![false; n],
        stopping: vec![false; n],
        outputs,
        demand: fw.d_now,
        objective: outcome.objective,
        k_selected: outcome.k_selected,
        diagnostics: outcome.diagnostics,
    })
}
