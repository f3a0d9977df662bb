//! Replay validation of a decision log.
//!
//! Every check is recomputed from the recorded stages, flags and outputs and
//! the unit specifications alone; no simulation state is consulted.

use serde::{Deserialize, Serialize};

use crate::fleet::GeneratorSpec;
use crate::ramp::ProfileKind;
use crate::rounding::PeriodDecision;
use crate::runtime::{Stage, StartThresholds};
use crate::sim::{Model, SimConfig, SimulationReport, BALANCE_TOL};

const MW_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    MinRuntime,
    StartCap,
    RampRate,
    StoppingBand,
    Transition,
    StageDuration,
    ProfileOutput,
    OutputBounds,
    Flags,
    Demand,
    /// Unserved demand after the warm-up day.
    Shortfall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: Check,
    pub period: usize,
    pub unit: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub violations: Vec<Violation>,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, check: Check) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }
}

pub struct ReplayContext<'a> {
    pub specs: &'a [GeneratorSpec],
    pub dt: u32,
    /// `None` for the runtime model.
    pub profile: Option<ProfileKind>,
    pub initial_off_minutes: f64,
    pub thresholds: StartThresholds,
    /// Periods excluded from the shortfall check.
    pub warmup: usize,
}

impl<'a> ReplayContext<'a> {
    pub fn for_report(report: &SimulationReport, specs: &'a [GeneratorSpec], config: &SimConfig) -> Self {
        Self {
            specs,
            dt: report.dt,
            profile: report.model.profile(),
            initial_off_minutes: config.initial_off_hours * 60.0,
            thresholds: config.start_thresholds,
            warmup: report.warmup_periods,
        }
    }
}

struct Log {
    out: Vec<Violation>,
}

impl Log {
    fn push(&mut self, check: Check, period: usize, unit: Option<usize>, detail: String) {
        self.out.push(Violation {
            check,
            period,
            unit,
            detail,
        });
    }
}

fn legal(profile: Option<ProfileKind>, from: Stage, to: Stage) -> bool {
    use Stage::*;
    if from == to {
        return true;
    }
    match profile {
        None => matches!((from, to), (Off, On) | (On, Off)),
        Some(ProfileKind::Piecewise) => matches!(
            (from, to),
            (Off, Prepare) | (Prepare, RampUp) | (RampUp, On) | (On, RampDown) | (RampDown, Off)
        ),
        Some(ProfileKind::Smooth) => {
            matches!((from, to), (Off, RampUp) | (RampUp, On) | (On, RampDown) | (RampDown, Off))
        }
    }
}

fn ceil_periods(minutes: f64, dt: f64) -> u32 {
    ((minutes / dt - 1e-9).ceil() as u32).max(1)
}

/// Expected duration of a ramping stage entered with `off_minutes` of downtime.
fn expected_duration(g: &GeneratorSpec, stage: Stage, kind: ProfileKind, off_minutes: f64, ctx: &ReplayContext) -> u32 {
    let dt = ctx.dt as f64;
    let prep = g.start_durations.get(ctx.thresholds.start_type(off_minutes));
    let climb = g.p_min / g.ramp_up_rate;
    match (stage, kind) {
        (Stage::Prepare, _) => ceil_periods(prep, dt),
        (Stage::RampUp, ProfileKind::Piecewise) => ceil_periods(climb, dt),
        (Stage::RampUp, ProfileKind::Smooth) => ceil_periods(prep + climb, dt),
        (Stage::RampDown, _) => ceil_periods(g.p_min / g.ramp_down_rate, dt),
        _ => 0,
    }
}

fn expected_output(g: &GeneratorSpec, stage: Stage, kind: ProfileKind, age: u32, duration: u32, dt: f64) -> f64 {
    let a = age as f64;
    let d = duration as f64;
    match (stage, kind) {
        (Stage::Prepare, _) => 0.0,
        (Stage::RampUp, ProfileKind::Piecewise) => g.p_min * a / d,
        (Stage::RampUp, ProfileKind::Smooth) => g.p_min * (a / d) * (a / d),
        (Stage::RampDown, _) if age == 1 => (g.p_min - g.ramp_down_rate * dt).max(0.0),
        (Stage::RampDown, _) => (g.p_min * (1.0 - a / d)).max(0.0),
        _ => 0.0,
    }
}

/// Runs every check over `decisions`.
pub fn replay(decisions: &[PeriodDecision], ctx: &ReplayContext) -> ReplayReport {
    let mut log = Log { out: Vec::new() };
    let n = ctx.specs.len();
    let dt = ctx.dt as f64;
    let window = (24 * 60 / ctx.dt) as usize;

    for (t, d) in decisions.iter().enumerate() {
        if d.stages.len() != n || d.outputs.len() != n {
            log.push(Check::Flags, t, None, "decision does not cover the fleet".into());
            return ReplayReport { violations: log.out };
        }
        let supplied: f64 = d.outputs.iter().sum();
        let flagged = d.diagnostics.shortfall > 0.0;
        if !flagged && supplied < d.demand * (1.0 - BALANCE_TOL) {
            log.push(Check::Demand, t, None, format!("supplied {supplied} < demand {}", d.demand));
        }
        if flagged && t >= ctx.warmup {
            log.push(Check::Shortfall, t, None, format!("{} MW unserved", d.diagnostics.shortfall));
        }
    }

    for i in 0..n {
        let g = &ctx.specs[i];
        let r_u = g.ramp_up_rate * dt;
        let r_d = g.ramp_down_rate * dt;
        let mut prev_stage = Stage::Off;
        let mut prev_output = 0.0;
        let mut age = 0u32;
        let mut off_minutes = ctx.initial_off_minutes;
        // off minutes when the current start sequence began
        let mut start_off = off_minutes;
        let mut on_run = 0usize;
        let mut starts: Vec<usize> = Vec::new();

        for (t, d) in decisions.iter().enumerate() {
            let stage = d.stages[i];
            let p = d.outputs[i];
            let (u, v, w) = (d.committed[i], d.starting[i], d.stopping[i]);

            if !legal(ctx.profile, prev_stage, stage) {
                log.push(Check::Transition, t, Some(i), format!("{prev_stage} -> {stage}"));
            }
            let entered = stage != prev_stage;
            let is_start = prev_stage == Stage::Off && stage != Stage::Off;
            if is_start {
                starts.push(t);
                start_off = off_minutes;
            }

            // u/v/w consistency
            if u as u8 + v as u8 + w as u8 > 1 {
                log.push(Check::Flags, t, Some(i), "more than one of u, v, w".into());
            }
            if u != (stage == Stage::On) {
                log.push(Check::Flags, t, Some(i), format!("u = {u} in stage {stage}"));
            }
            if ctx.profile.is_some() {
                if v != is_start {
                    log.push(Check::Flags, t, Some(i), format!("v = {v} on {prev_stage} -> {stage}"));
                }
                let stop = prev_stage == Stage::On && stage == Stage::RampDown;
                if w != stop {
                    log.push(Check::Flags, t, Some(i), format!("w = {w} on {prev_stage} -> {stage}"));
                }
            }

            // min runtime: a run of on periods may only end after T_min
            if prev_stage == Stage::On && stage != Stage::On && (on_run as f64) * dt < g.min_runtime - 1e-9 {
                log.push(
                    Check::MinRuntime,
                    t,
                    Some(i),
                    format!("left on after {on_run} periods, minimum {} min", g.min_runtime),
                );
            }

            // stage ages and durations
            let prev_age = age;
            age = if entered { 1 } else { age + 1 };
            if let Some(kind) = ctx.profile {
                if stage.is_ramping() {
                    let dur = expected_duration(g, stage, kind, start_off, ctx);
                    if age > dur {
                        log.push(Check::StageDuration, t, Some(i), format!("{stage} age {age} exceeds {dur}"));
                    }
                    let want = expected_output(g, stage, kind, age, dur, dt);
                    if (p - want).abs() > MW_TOL * (1.0 + g.p_min) {
                        log.push(Check::ProfileOutput, t, Some(i), format!("{stage} age {age}: {p} MW, expected {want}"));
                    }
                }
                if entered && prev_stage.is_ramping() {
                    let dur = expected_duration(g, prev_stage, kind, start_off, ctx);
                    if prev_age != dur {
                        log.push(
                            Check::StageDuration,
                            t,
                            Some(i),
                            format!("{prev_stage} held {prev_age} periods, expected {dur}"),
                        );
                    }
                }
                if stage == Stage::On && matches!(prev_stage, Stage::On | Stage::RampUp) {
                    if p - prev_output > r_u + MW_TOL {
                        log.push(Check::RampRate, t, Some(i), format!("up {} > {r_u}", p - prev_output));
                    }
                    if prev_output - p > r_d + MW_TOL {
                        log.push(Check::RampRate, t, Some(i), format!("down {} > {r_d}", prev_output - p));
                    }
                }
                if prev_stage == Stage::On && stage == Stage::RampDown && prev_output > g.p_min + r_d + MW_TOL {
                    log.push(
                        Check::StoppingBand,
                        t,
                        Some(i),
                        format!("stopped from {prev_output} MW, band {}", g.p_min + r_d),
                    );
                }
            }

            match stage {
                Stage::On => {
                    if p < g.p_min - MW_TOL || p > g.p_max + MW_TOL {
                        log.push(Check::OutputBounds, t, Some(i), format!("{p} MW outside [{}, {}]", g.p_min, g.p_max));
                    }
                }
                Stage::Off => {
                    if p != 0.0 {
                        log.push(Check::OutputBounds, t, Some(i), format!("{p} MW while off"));
                    }
                }
                _ => {}
            }

            // bookkeeping for the next period
            on_run = if stage == Stage::On { on_run + 1 } else { 0 };
            if stage == Stage::RampDown && prev_stage == Stage::On {
                off_minutes = 0.0;
            }
            if ctx.profile.is_none() && stage == Stage::Off && prev_stage == Stage::On {
                off_minutes = 0.0;
            }
            if matches!(stage, Stage::Off | Stage::RampDown) {
                off_minutes += dt;
            }
            prev_stage = stage;
            prev_output = p;
        }

        // start cap in every window of one day
        let mut lo = 0;
        for hi in 0..starts.len() {
            while starts[hi] - starts[lo] >= window {
                lo += 1;
            }
            if hi + 1 - lo > g.max_daily_starts as usize {
                log.push(
                    Check::StartCap,
                    starts[hi],
                    Some(i),
                    format!("{} starts within one day, cap {}", hi + 1 - lo, g.max_daily_starts),
                );
            }
        }
    }
    ReplayReport { violations: log.out }
}

/// Replays a full simulation report.
pub fn replay_report(report: &SimulationReport, specs: &[GeneratorSpec], config: &SimConfig) -> ReplayReport {
    replay(&report.decisions, &ReplayContext::for_report(report, specs, config))
}

/// Models whose logs carry ramping stages.
pub fn has_ramp_stages(model: Model) -> bool {
    model.profile().is_some()
}
