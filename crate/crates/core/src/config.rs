//! Run configuration: TOML file plus command-line overrides.
//!
//! Precedence is built-in defaults, then the file, then flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::DemandSetup;
use crate::demand::DemandTrace;
use crate::error::{Error, Result};
use crate::fleet::{reconstructed_base_fleet, synthesize_fleet, Fleet};
use crate::ramp::{ProfileKind, RampConfig};
use crate::relaxation::RelaxConfig;
use crate::rounding::SweepConfig;
use crate::runtime::StartThresholds;
use crate::sim::{Model, SimConfig};

/// Where the fleet comes from: a JSON file or copies of the base fleet.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSource {
    pub file: Option<PathBuf>,
    pub multiplier: Option<u32>,
}

/// Where demand comes from: a CSV file or the synthetic diurnal trace.
///
/// Synthetic levels and `sigma_gw` refer to the full 22× system and are
/// scaled by the fleet's share of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandSource {
    pub file: Option<PathBuf>,
    pub low_gw: Option<f64>,
    pub peak_gw: Option<f64>,
    pub days: Option<u32>,
    pub dt: u32,
    pub sigma_gw: f64,
}

impl Default for DemandSource {
    fn default() -> Self {
        Self {
            file: None,
            low_gw: None,
            peak_gw: None,
            days: None,
            dt: 5,
            sigma_gw: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub multipliers: Vec<u32>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            multipliers: vec![1, 2, 4, 8, 16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub units: usize,
    pub instances: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            units: 12,
            instances: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `runtime`, `ramp_piecewise`, `ramp_smooth`, or `ramp` to follow `ramp.profile`.
    pub model: String,
    pub seed: u64,
    pub out: PathBuf,
    pub fleet: FleetSource,
    pub demand: DemandSource,
    pub relax: RelaxConfig,
    pub sweep: SweepConfig,
    pub ramp: RampConfig,
    pub start_thresholds: StartThresholds,
    pub initial_off_hours: f64,
    pub bench: BenchConfig,
    pub oracle: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            model: "ramp".into(),
            seed: 0,
            out: PathBuf::from("out"),
            fleet: FleetSource::default(),
            demand: DemandSource::default(),
            relax: sim.relax,
            sweep: sim.sweep,
            ramp: sim.ramp,
            start_thresholds: sim.start_thresholds,
            initial_off_hours: sim.initial_off_hours,
            bench: BenchConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

const FULL_LOW_GW: f64 = 78.6;
const FULL_PEAK_GW: f64 = 160.2;
const DEFAULT_DAYS: u32 = 8;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.resolved_model()?;
        if self.fleet.file.is_some() && self.fleet.multiplier.is_some() {
            return Err(Error::Config("fleet: give either a file or a multiplier, not both".into()));
        }
        if self.fleet.multiplier == Some(0) {
            return Err(Error::Config("fleet.multiplier must be at least 1".into()));
        }
        let d = &self.demand;
        if d.file.is_some() && (d.low_gw.is_some() || d.peak_gw.is_some() || d.days.is_some()) {
            return Err(Error::Config("demand: give either a file or synthetic levels, not both".into()));
        }
        if d.dt == 0 || 24 * 60 % d.dt != 0 {
            return Err(Error::Config(format!("demand.dt = {} does not divide a day", d.dt)));
        }
        if !(d.sigma_gw >= 0.0 && d.sigma_gw.is_finite()) {
            return Err(Error::Config("demand.sigma_gw must be a non-negative number".into()));
        }
        if !(self.ramp.beta >= 0.0 && self.ramp.beta.is_finite()) {
            return Err(Error::Config("ramp.beta must be a non-negative number".into()));
        }
        Ok(())
    }

    pub fn resolved_model(&self) -> Result<Model> {
        match self.model.as_str() {
            "ramp" => Ok(match self.ramp.profile {
                ProfileKind::Piecewise => Model::RampPiecewise,
                ProfileKind::Smooth => Model::RampSmooth,
            }),
            other => other.parse().map_err(|_| {
                Error::Config(format!(
                    "unknown model `{other}` (runtime, ramp, ramp_piecewise, ramp_smooth)"
                ))
            }),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            relax: self.relax,
            sweep: self.sweep,
            ramp: self.ramp,
            start_thresholds: self.start_thresholds,
            initial_off_hours: self.initial_off_hours,
        }
    }

    pub fn build_fleet(&self) -> Result<Fleet> {
        match &self.fleet.file {
            Some(path) => Fleet::load(path),
            None => synthesize_fleet(&reconstructed_base_fleet(), self.fleet.multiplier.unwrap_or(1), self.seed),
        }
    }

    /// Synthetic demand parameters in MW for the full system.
    pub fn demand_setup(&self) -> DemandSetup {
        let d = &self.demand;
        DemandSetup {
            low_mw: d.low_gw.unwrap_or(FULL_LOW_GW) * 1e3,
            peak_mw: d.peak_gw.unwrap_or(FULL_PEAK_GW) * 1e3,
            sigma_mw: d.sigma_gw * 1e3,
            days: d.days.unwrap_or(DEFAULT_DAYS),
            dt: d.dt,
            seed: self.seed,
        }
    }

    pub fn build_demand(&self, fleet: &Fleet) -> Result<DemandTrace> {
        let setup = self.demand_setup();
        match &self.demand.file {
            Some(path) => {
                let sigma = setup.sigma_mw * DemandSetup::share(fleet.base_multiplier);
                DemandTrace::from_csv(path, self.demand.dt, sigma)
            }
            None => setup.trace(fleet.base_multiplier),
        }
    }

    /// Writes the resolved configuration to `dir/config.echo.json`.
    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut echo = serde_json::to_value(self)?;
        echo["resolved_model"] = serde_json::Value::String(self.resolved_model()?.to_string());
        fs::write(dir.join("config.echo.json"), serde_json::to_string_pretty(&echo)?)?;
        Ok(())
    }
}
