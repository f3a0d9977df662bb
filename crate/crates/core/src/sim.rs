//! Rolling simulation over a demand trace with warm-up exclusion and a
//! per-period census of unit stages.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::demand::{forecast_stats, DemandTrace, ForecastWindow};
use crate::error::{Error, Result};
use crate::fleet::{CostCurve, Fleet};
use crate::ramp::{step_ramp_uc, ProfileKind, RampConfig};
use crate::relaxation::{RelaxConfig, RelaxStatus};
use crate::rounding::{PeriodDecision, SweepConfig};
use crate::runtime::{step_runtime_uc, GeneratorState, Stage, StartThresholds};

/// Relative slack on demand balance checks.
pub const BALANCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Runtime,
    RampPiecewise,
    RampSmooth,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Runtime, Model::RampPiecewise, Model::RampSmooth];

    pub fn profile(self) -> Option<ProfileKind> {
        match self {
            Model::Runtime => None,
            Model::RampPiecewise => Some(ProfileKind::Piecewise),
            Model::RampSmooth => Some(ProfileKind::Smooth),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Runtime => "runtime",
            Model::RampPiecewise => "ramp_piecewise",
            Model::RampSmooth => "ramp_smooth",
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub relax: RelaxConfig,
    pub sweep: SweepConfig,
    pub ramp: RampConfig,
    pub start_thresholds: StartThresholds,
    /// Off time of every unit before the first period.
    pub initial_off_hours: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            relax: RelaxConfig::default(),
            sweep: SweepConfig::default(),
            ramp: RampConfig::default(),
            start_thresholds: StartThresholds::default(),
            initial_off_hours: 72.0,
        }
    }
}

/// Everything one period step reads and mutates.
#[derive(Debug, Clone)]
pub struct System {
    pub fleet: Fleet,
    /// Cost curves converted to $ per period.
    pub costs: Vec<CostCurve>,
    pub states: Vec<GeneratorState>,
    pub trace: DemandTrace,
    pub config: SimConfig,
}

impl System {
    pub fn new(fleet: Fleet, trace: DemandTrace, config: SimConfig) -> Self {
        let per_period = trace.dt as f64 / 60.0;
        let costs = fleet.generators.iter().map(|g| g.cost.scaled(per_period)).collect();
        let states = fleet
            .generators
            .iter()
            .map(|_| GeneratorState::off(config.initial_off_hours * 60.0))
            .collect();
        Self {
            fleet,
            costs,
            states,
            trace,
            config,
        }
    }

    pub fn forecast(&self, t: usize) -> Result<ForecastWindow> {
        forecast_stats(&self.trace, t, self.trace.sigma_d, 1.0)
    }

    pub fn step(&mut self, t: usize, model: Model) -> Result<PeriodDecision> {
        match model.profile() {
            None => step_runtime_uc(self, t),
            Some(kind) => step_ramp_uc(self, t, kind),
        }
    }

    pub fn snapshot(&self, period: usize) -> StateSnapshot {
        StateSnapshot {
            period,
            states: self.states.clone(),
        }
    }
}

/// Unit states at a period boundary, for resuming a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    /// First period not yet simulated.
    pub period: usize,
    pub states: Vec<GeneratorState>,
}

impl StateSnapshot {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCensus {
    pub off: u32,
    pub prepare: u32,
    pub ramp_up: u32,
    pub on: u32,
    pub ramp_down: u32,
}

impl StageCensus {
    pub fn of(stages: &[Stage]) -> Self {
        let mut c = Self::default();
        for s in stages {
            *c.slot(*s) += 1;
        }
        c
    }

    fn slot(&mut self, s: Stage) -> &mut u32 {
        match s {
            Stage::Off => &mut self.off,
            Stage::Prepare => &mut self.prepare,
            Stage::RampUp => &mut self.ramp_up,
            Stage::On => &mut self.on,
            Stage::RampDown => &mut self.ramp_down,
        }
    }

    pub fn as_array(&self) -> [u32; 5] {
        [self.off, self.prepare, self.ramp_up, self.on, self.ramp_down]
    }

    pub fn total(&self) -> u32 {
        self.as_array().iter().sum()
    }

    pub fn ramping(&self) -> u32 {
        self.prepare + self.ramp_up + self.ramp_down
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flag {
    Shortfall { mw: f64 },
    Emergency,
    CapacityShort,
    FloorViolated,
    RelaxNotConverged,
    RelaxInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodFlag {
    pub period: usize,
    pub flag: Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub model: Model,
    pub n_generators: usize,
    pub dt: u32,
    pub periods: usize,
    pub warmup_periods: usize,
    pub decisions: Vec<PeriodDecision>,
    pub total_objective_excl_warmup: f64,
    pub objective_per_generator: f64,
    pub wall_time: f64,
    pub state_census: Vec<StageCensus>,
    pub flags: Vec<PeriodFlag>,
    /// Post-warm-up periods with no unit in a ramping stage.
    pub quiet_periods_after_warmup: usize,
    pub max_shortfall_after_warmup: f64,
}

impl SimulationReport {
    /// Whether any post-warm-up period left demand unserved.
    pub fn shortfall_after_warmup(&self) -> bool {
        self.max_shortfall_after_warmup > 0.0
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_decisions_csv(&self, fleet: &Fleet, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["period", "unit", "stage", "output"])?;
        for d in &self.decisions {
            for (i, g) in fleet.generators.iter().enumerate() {
                w.write_record([
                    d.period.to_string().as_str(),
                    g.id.as_str(),
                    d.stages[i].as_str(),
                    d.outputs[i].to_string().as_str(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_census_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["period", "off", "prepare", "ramp_up", "on", "ramp_down"])?;
        for (t, c) in self.state_census.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(c.as_array().iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.json`, `decisions.csv` and `census.csv` into `dir`.
    pub fn write_outputs(&self, fleet: &Fleet, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_json(&dir.join("report.json"))?;
        self.write_decisions_csv(fleet, &dir.join("decisions.csv"))?;
        self.write_census_csv(&dir.join("census.csv"))
    }
}

fn flags_of(d: &PeriodDecision) -> Vec<Flag> {
    let diag = &d.diagnostics;
    let mut out = Vec::new();
    if diag.shortfall > 0.0 {
        out.push(Flag::Shortfall { mw: diag.shortfall });
    }
    if diag.emergency {
        out.push(Flag::Emergency);
    }
    if diag.capacity_short {
        out.push(Flag::CapacityShort);
    }
    if diag.floor_violated {
        out.push(Flag::FloorViolated);
    }
    match diag.relax_status {
        RelaxStatus::NotConverged => out.push(Flag::RelaxNotConverged),
        RelaxStatus::Infeasible => out.push(Flag::RelaxInfeasible),
        _ => {}
    }
    out
}

/// Post-step contract: outputs finite and non-negative, demand met unless flagged.
fn check_decision(d: &PeriodDecision) -> std::result::Result<(), String> {
    if let Some(p) = d.outputs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(format!("invalid output {p}"));
    }
    for (i, ((&u, &v), &w)) in d.committed.iter().zip(&d.starting).zip(&d.stopping).enumerate() {
        if u as u8 + v as u8 + w as u8 > 1 {
            return Err(format!("unit {i} has more than one of u, v, w set"));
        }
    }
    let supplied: f64 = d.outputs.iter().sum();
    if d.diagnostics.shortfall == 0.0 && supplied < d.demand * (1.0 - BALANCE_TOL) {
        return Err(format!("supply {supplied} below demand {} without a shortfall flag", d.demand));
    }
    Ok(())
}

pub fn run_simulation(fleet: &Fleet, trace: &DemandTrace, model: Model, config: &SimConfig) -> Result<SimulationReport> {
    let per_day = trace.periods_per_day();
    if trace.values.len() < 2 * per_day {
        return Err(Error::InvalidArgument(format!(
            "simulation needs at least two days ({} periods), trace has {}",
            2 * per_day,
            trace.values.len()
        )));
    }
    let mut system = System::new(fleet.clone(), trace.clone(), config.clone());
    let horizon = trace.values.len();
    let mut decisions = Vec::with_capacity(horizon);
    let started = Instant::now();
    for t in 0..horizon {
        let d = system.step(t, model).map_err(|e| match e {
            Error::ContractViolation { .. } => e,
            other => Error::ContractViolation {
                period: t,
                message: other.to_string(),
            },
        })?;
        check_decision(&d).map_err(|message| Error::ContractViolation { period: t, message })?;
        decisions.push(d);
    }
    let wall_time = started.elapsed().as_secs_f64();

    let warmup = per_day;
    let total: f64 = decisions[warmup..].iter().map(|d| d.objective).sum();
    let census: Vec<StageCensus> = decisions.iter().map(|d| StageCensus::of(&d.stages)).collect();
    let flags = decisions
        .iter()
        .flat_map(|d| flags_of(d).into_iter().map(move |flag| PeriodFlag { period: d.period, flag }))
        .collect();
    let quiet = census[warmup..].iter().filter(|c| c.ramping() == 0).count();
    let max_shortfall = decisions[warmup..]
        .iter()
        .map(|d| d.diagnostics.shortfall)
        .fold(0.0, f64::max);
    Ok(SimulationReport {
        model,
        n_generators: fleet.len(),
        dt: trace.dt,
        periods: horizon,
        warmup_periods: warmup,
        decisions,
        total_objective_excl_warmup: total,
        objective_per_generator: total / fleet.len() as f64,
        wall_time,
        state_census: census,
        flags,
        quiet_periods_after_warmup: quiet,
        max_shortfall_after_warmup: max_shortfall,
    })
}

/// Per-period census difference `a − b` in stage order off, prepare, ramp_up, on, ramp_down.
pub fn state_census_diff(a: &SimulationReport, b: &SimulationReport) -> Result<Vec<[i64; 5]>> {
    census_diff(&a.state_census, &b.state_census)
}

pub fn census_diff(a: &[StageCensus], b: &[StageCensus]) -> Result<Vec<[i64; 5]>> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "census horizons differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| {
            let (x, y) = (x.as_array(), y.as_array());
            std::array::from_fn(|k| x[k] as i64 - y[k] as i64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn census_counts_every_unit() {
        let c = StageCensus::of(&[Stage::Off, Stage::On, Stage::On, Stage::RampDown]);
        assert_eq!(c.as_array(), [1, 0, 0, 2, 1]);
        assert_eq!(c.total(), 4);
        assert_eq!(c.ramping(), 1);
    }

    #[test]
    fn census_diff_marks_shifted_transition() {
        let a = vec![StageCensus::of(&[Stage::Off]), StageCensus::of(&[Stage::On])];
        let b = vec![StageCensus::of(&[Stage::Off]), StageCensus::of(&[Stage::Off])];
        let d = census_diff(&a, &b).unwrap();
        assert_eq!(d[0], [0; 5]);
        assert_eq!(d[1], [-1, 0, 0, 1, 0]);
        assert!(census_diff(&a, &b[..1]).is_err());
    }

    #[test]
    fn model_names_round_trip() {
        for m in Model::ALL {
            assert_eq!(m.as_str().parse::<Model>().unwrap(), m);
        }
        assert!("ramp".parse::<Model>().is_err());
    }
}
