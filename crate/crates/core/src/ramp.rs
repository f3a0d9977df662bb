//! Ramp-constrained commitment: the five-stage unit cycle, ramp-limited
//! dispatch bounds, supply from units already ramping, and the per-period step.

use serde::{Deserialize, Serialize};

use crate::dispatch::DispatchUnit;
use crate::error::{Error, Result};
use crate::fleet::{GeneratorSpec, StartType};
use crate::relaxation::{
    order_candidates, solve_relaxed, MustRunUnit, RelaxStatus, RelaxedProblem, RelaxedUnit,
};
use crate::rounding::{
    commit_range, sweep_dispatch, Diagnostics, PeriodDecision, RangeTargets, SweepStatus, SweepUnit,
};
use crate::runtime::{GeneratorState, Stage, StartThresholds};
use crate::sim::System;

/// Tolerance absorbing rounding in minute ratios before taking a ceiling.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// Idle preparation, then a linear climb to p_min.
    Piecewise,
    /// A single quadratic climb from zero to p_min.
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RampConfig {
    /// Profile used when the model is selected as plain `ramp`.
    pub profile: ProfileKind,
    /// Weight of the efficiency term on starts.
    pub beta: f64,
}

impl Default for RampConfig {
    fn default() -> Self {
        Self {
            profile: ProfileKind::Piecewise,
            beta: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampProfile {
    pub kind: ProfileKind,
    pub t_prepare: u32,
    pub t_up: u32,
    pub t_down: u32,
    pub t_combined: u32,
    /// MW per period.
    pub r_u: f64,
    pub r_d: f64,
}

impl RampProfile {
    /// Periods spent in `stage` under this profile, if it is a ramping stage.
    pub fn duration(&self, stage: Stage) -> Option<u32> {
        match (stage, self.kind) {
            (Stage::Prepare, ProfileKind::Piecewise) => Some(self.t_prepare),
            (Stage::RampUp, ProfileKind::Piecewise) => Some(self.t_up),
            (Stage::RampUp, ProfileKind::Smooth) => Some(self.t_combined),
            (Stage::RampDown, _) => Some(self.t_down),
            _ => None,
        }
    }

    /// Stage entered when a start is decided.
    pub fn start_stage(&self) -> Stage {
        match self.kind {
            ProfileKind::Piecewise => Stage::Prepare,
            ProfileKind::Smooth => Stage::RampUp,
        }
    }
}

/// Whole periods covering `minutes`, at least one.
pub fn periods_ceil(minutes: f64, dt: u32) -> u32 {
    ((minutes / dt as f64 - CEIL_SLACK).ceil() as u32).max(1)
}

pub fn ramp_durations(spec: &GeneratorSpec, dt: u32, off_duration: f64, kind: ProfileKind) -> RampProfile {
    ramp_durations_with(spec, dt, off_duration, kind, &StartThresholds::default())
}

pub fn ramp_durations_with(
    spec: &GeneratorSpec,
    dt: u32,
    off_duration: f64,
    kind: ProfileKind,
    thresholds: &StartThresholds,
) -> RampProfile {
    let start: StartType = thresholds.start_type(off_duration);
    let prepare = spec.start_durations.get(start);
    let climb = spec.p_min / spec.ramp_up_rate;
    RampProfile {
        kind,
        t_prepare: periods_ceil(prepare, dt),
        t_up: periods_ceil(climb, dt),
        t_down: periods_ceil(spec.p_min / spec.ramp_down_rate, dt),
        t_combined: periods_ceil(prepare + climb, dt),
        r_u: spec.ramp_up_rate * dt as f64,
        r_d: spec.ramp_down_rate * dt as f64,
    }
}

/// Output of a ramping unit at `stage_age` periods into `stage`.
pub fn ramp_output(spec: &GeneratorSpec, profile: &RampProfile, stage: Stage, stage_age: u32) -> Result<f64> {
    let age = stage_age as f64;
    match (stage, profile.kind) {
        (Stage::Prepare, _) => Ok(0.0),
        (Stage::RampUp, ProfileKind::Piecewise) => {
            Ok(spec.p_min * (age / profile.t_up as f64).min(1.0))
        }
        (Stage::RampUp, ProfileKind::Smooth) => {
            let x = (age / profile.t_combined as f64).min(1.0);
            Ok(spec.p_min * x * x)
        }
        (Stage::RampDown, _) => Ok((spec.p_min * (1.0 - age / profile.t_down as f64)).max(0.0)),
        _ => Err(Error::InvalidArgument(format!("{stage} is not a ramping stage"))),
    }
}

/// Output of a unit in its first ramp-down period.
pub fn shutdown_step_output(spec: &GeneratorSpec, r_d: f64) -> f64 {
    (spec.p_min - r_d).max(0.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RampingSupply {
    pub s_r: f64,
    pub s_max_r: f64,
    pub s_min_r: f64,
}

/// Supply and capacity of units in ramping stages, from their recorded profiles.
pub fn ramping_supply(states: &[GeneratorState], specs: &[GeneratorSpec]) -> Result<RampingSupply> {
    let mut out = RampingSupply::default();
    for (s, g) in states.iter().zip(specs) {
        if !s.stage.is_ramping() {
            continue;
        }
        let profile = s.profile.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("unit {} is ramping without a profile", g.id))
        })?;
        out.s_r += ramp_output(g, profile, s.stage, s.stage_age)?;
        if matches!(s.stage, Stage::Prepare | Stage::RampUp) {
            out.s_max_r += g.p_max;
            out.s_min_r += g.p_min;
        }
    }
    Ok(out)
}

/// Dispatch window of an on unit given last period's output.
pub fn ramp_bounds(spec: &GeneratorSpec, prev_output: f64, r_u: f64, r_d: f64) -> (f64, f64) {
    let lo = spec.p_min.max(prev_output - r_d);
    let hi = spec.p_max.min(prev_output + r_u);
    (lo.min(hi), hi)
}

/// Advances stage ages and applies finished-stage promotions.
pub fn advance_stages(states: &mut [GeneratorState], specs: &[GeneratorSpec]) -> Result<()> {
    for (s, g) in states.iter_mut().zip(specs) {
        s.stage_age += 1;
        if !s.stage.is_ramping() {
            continue;
        }
        let profile = s.profile.ok_or_else(|| {
            Error::InvalidArgument(format!("unit {} is ramping without a profile", g.id))
        })?;
        let limit = profile.duration(s.stage).ok_or_else(|| {
            Error::InvalidArgument(format!("unit {} in {} under a {:?} profile", g.id, s.stage, profile.kind))
        })?;
        if s.stage_age > limit {
            s.stage_age = 1;
            match s.stage {
                Stage::Prepare => s.stage = Stage::RampUp,
                Stage::RampUp => {
                    s.stage = Stage::On;
                    s.on_duration = 0.0;
                    s.profile = None;
                }
                Stage::RampDown => {
                    s.stage = Stage::Off;
                    s.profile = None;
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    MustRun,
    StayOn,
    MayStart,
    Excluded,
}

/// One period of the ramp model; updates `system.states` in place.
pub fn step_ramp_uc(system: &mut System, t: usize, kind: ProfileKind) -> Result<PeriodDecision> {
    let dt = system.trace.dt;
    let dtf = dt as f64;
    let now = t as u64 * dt as u64;
    for s in system.states.iter_mut() {
        s.prune_log(now);
    }
    advance_stages(&mut system.states, &system.fleet.generators)?;

    let specs = &system.fleet.generators;
    let states = &system.states;
    let thresholds = system.config.start_thresholds;
    let beta = system.config.ramp.beta;
    let n = specs.len();

    let mut roles = Vec::with_capacity(n);
    for (s, g) in states.iter().zip(specs) {
        let r_d = g.ramp_down_rate * dtf;
        let role = match s.stage {
            Stage::On if s.on_duration < g.min_runtime || s.prev_output > g.p_min + r_d => Role::MustRun,
            Stage::On => Role::StayOn,
            Stage::Off if s.starts_in_window(now) >= g.max_daily_starts as usize => Role::Excluded,
            Stage::Off => Role::MayStart,
            _ => Role::Excluded,
        };
        roles.push(role);
    }

    let supply = ramping_supply(states, specs)?;
    let fw = system.forecast(t)?;
    let demand = fw.d_now - supply.s_r;
    let targets = RangeTargets {
        capacity: fw.d_max_72 + 3.0 * fw.sigma_d - supply.s_max_r,
        floor: fw.d_min_72 - fw.sigma_d - supply.s_min_r,
    };

    let bounds = |i: usize| {
        let g = &specs[i];
        ramp_bounds(g, states[i].prev_output, g.ramp_up_rate * dtf, g.ramp_down_rate * dtf)
    };
    let must: Vec<usize> = (0..n).filter(|&i| roles[i] == Role::MustRun).collect();
    let disc: Vec<usize> = (0..n)
        .filter(|&i| matches!(roles[i], Role::StayOn | Role::MayStart))
        .collect();

    let penalty = |i: usize| {
        let kind = if states[i].stage == Stage::On {
            StartType::Hot
        } else {
            thresholds.start_type(states[i].off_duration)
        };
        0.5 * (specs[i].start_costs.get(kind) + specs[i].shutdown_cost)
    };
    let efficiency = |i: usize| beta * system.costs[i].average(specs[i].p_typ);

    let relaxed_units: Vec<RelaxedUnit> = disc
        .iter()
        .map(|&i| {
            let g = &specs[i];
            if roles[i] == Role::StayOn {
                let (lo, hi) = bounds(i);
                RelaxedUnit {
                    cost: system.costs[i],
                    p_lo: lo,
                    p_hi: hi,
                    has_output: true,
                    anchor: 1.0,
                    switch_penalty: penalty(i),
                    score_cost: 0.0,
                    fallback_supply: shutdown_step_output(g, g.ramp_down_rate * dtf),
                    cap_max: g.p_max,
                    cap_min: g.p_min,
                }
            } else {
                RelaxedUnit {
                    cost: system.costs[i],
                    p_lo: 0.0,
                    p_hi: 0.0,
                    has_output: false,
                    anchor: 0.0,
                    switch_penalty: penalty(i),
                    score_cost: efficiency(i),
                    fallback_supply: 0.0,
                    cap_max: g.p_max,
                    cap_min: g.p_min,
                }
            }
        })
        .collect();
    let problem = RelaxedProblem {
        units: relaxed_units,
        must_run: must
            .iter()
            .map(|&i| {
                let (lo, hi) = bounds(i);
                MustRunUnit {
                    cost: system.costs[i],
                    p_lo: lo,
                    p_hi: hi,
                }
            })
            .collect(),
        demand,
        capacity_rhs: targets.capacity,
        floor_rhs: targets.floor,
        must_run_p_max: must.iter().map(|&i| specs[i].p_max).sum(),
        must_run_p_min: must.iter().map(|&i| specs[i].p_min).sum(),
    };
    let relaxed = solve_relaxed(&problem, &system.config.relax);
    if relaxed.status == RelaxStatus::NotConverged {
        log::warn!(
            "period {t}: relaxation stopped at kkt residual {:.2e}; using priority order",
            relaxed.kkt_residual
        );
    }
    let disc_specs: Vec<&GeneratorSpec> = disc.iter().map(|&i| &specs[i]).collect();
    let order: Vec<usize> = order_candidates(&relaxed.y, &disc_specs, !relaxed.usable())
        .into_iter()
        .map(|j| disc[j])
        .collect();

    let limits = |i: &usize| (specs[*i].p_max, specs[*i].p_min);
    let range = commit_range(
        &order.iter().map(limits).collect::<Vec<_>>(),
        &must.iter().map(limits).collect::<Vec<_>>(),
        targets,
    );
    let must_units: Vec<DispatchUnit> = must
        .iter()
        .map(|&i| {
            let (lo, hi) = bounds(i);
            DispatchUnit::new(system.costs[i], lo, hi, 0.0)
        })
        .collect();
    let ordered_units: Vec<SweepUnit> = order
        .iter()
        .map(|&i| {
            let g = &specs[i];
            if roles[i] == Role::StayOn {
                let (lo, hi) = bounds(i);
                SweepUnit {
                    on: DispatchUnit::new(system.costs[i], lo, hi, 0.0),
                    dispatchable: true,
                    off_penalty: 0.0,
                    off_supply: shutdown_step_output(g, g.ramp_down_rate * dtf),
                }
            } else {
                SweepUnit {
                    on: DispatchUnit::new(system.costs[i], 0.0, 0.0, penalty(i)),
                    dispatchable: false,
                    off_penalty: 0.0,
                    off_supply: 0.0,
                }
            }
        })
        .collect();
    let out = sweep_dispatch(&must_units, &ordered_units, demand, &range, &system.config.sweep)?;
    let prefix = out.k_selected - must.len();

    let mut committed = vec![false; n];
    let mut starting = vec![false; n];
    let mut stopping = vec![false; n];
    let mut outputs = vec![0.0; n];
    for (j, &i) in must.iter().enumerate() {
        committed[i] = true;
        outputs[i] = out.must_run_outputs[j];
    }
    for (pos, &i) in order.iter().enumerate() {
        let chosen = pos < prefix;
        match roles[i] {
            Role::StayOn if chosen => {
                committed[i] = true;
                outputs[i] = out.candidate_outputs[pos];
            }
            Role::StayOn => stopping[i] = true,
            Role::MayStart if chosen => starting[i] = true,
            _ => {}
        }
    }

    let d_shortfall = out.shortfall;
    let emergency = out.status == SweepStatus::Emergency;
    let states = &mut system.states;
    for i in 0..n {
        let g = &specs[i];
        let s = &mut states[i];
        if starting[i] {
            let profile = ramp_durations_with(g, dt, s.off_duration, kind, &thresholds);
            s.start_log.push(now);
            s.stage = profile.start_stage();
            s.stage_age = 1;
            s.profile = Some(profile);
            outputs[i] = ramp_output(g, &profile, s.stage, 1)?;
        } else if stopping[i] {
            let profile = ramp_durations_with(g, dt, 0.0, kind, &thresholds);
            s.stage = Stage::RampDown;
            s.stage_age = 1;
            s.on_duration = 0.0;
            s.off_duration = 0.0;
            s.profile = Some(profile);
            outputs[i] = shutdown_step_output(g, profile.r_d);
        } else if s.stage.is_ramping() {
            let profile = s.profile.expect("ramping units carry a profile");
            outputs[i] = ramp_output(g, &profile, s.stage, s.stage_age)?;
        }
        match s.stage {
            Stage::On => s.on_duration += dtf,
            Stage::Off | Stage::RampDown => s.off_duration += dtf,
            _ => {}
        }
        s.prev_output = outputs[i];
    }

    let objective = out.objective;
    Ok(PeriodDecision {
        period: t,
        stages: states.iter().map(|s| s.stage).collect(),
        committed,
        starting,
        stopping,
        outputs,
        demand: fw.d_now,
        objective,
        k_selected: out.k_selected,
        diagnostics: Diagnostics {
            relax_status: relaxed.status,
            relax_kkt: relaxed.kkt_residual,
            sweep_width: range.width(),
            evaluated: out.evaluated,
            capacity_short: range.capacity_short,
            floor_violated: range.floor_violated,
            emergency,
            shortfall: d_shortfall,
        },
    })
}
