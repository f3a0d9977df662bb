//! Command-line entry point.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::scaling_study;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fleet::{reconstruct_base_fleet, reconstructed_base_fleet, synthesize_fleet, Fleet, BASE_FLEET_SEED};
use crate::oracle::compare_suite;
use crate::sim::run_simulation;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SHORTFALL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rruc", version, about = "Relax-and-round unit commitment")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// runtime, ramp, ramp_piecewise or ramp_smooth.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Fleet JSON file.
    #[arg(long, global = true, conflicts_with = "multiplier")]
    pub fleet: Option<PathBuf>,
    /// Number of base-fleet copies to synthesize.
    #[arg(long, global = true)]
    pub multiplier: Option<u32>,
    /// Demand CSV file with a `period_index,demand_mw` header.
    #[arg(long, global = true)]
    pub demand: Option<PathBuf>,
    /// Period length in minutes.
    #[arg(long, global = true)]
    pub dt: Option<u32>,
    /// Days of synthetic demand.
    #[arg(long, global = true)]
    pub days: Option<u32>,
    /// Forecast standard deviation of the full 22x system, GW.
    #[arg(long = "sigma-gw", global = true)]
    pub sigma_gw: Option<f64>,
    /// Weight of the start efficiency term in the ramp model.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Evaluate sweep prefixes concurrently.
    #[arg(long, global = true)]
    pub parallel: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a fleet JSON file.
    SynthFleet {
        /// Rebuild the base fleet from its generator instead of the bundled file.
        #[arg(long)]
        reconstruct: bool,
        /// Seed of the rebuilt base fleet.
        #[arg(long, requires = "reconstruct", default_value_t = BASE_FLEET_SEED)]
        base_seed: u64,
    },
    /// Write a synthetic demand CSV for the configured fleet.
    SynthDemand,
    /// Run a rolling simulation.
    Simulate,
    /// Run the scaling study.
    Bench {
        /// Comma-separated fleet multiples.
        #[arg(long, value_delimiter = ',')]
        multipliers: Option<Vec<u32>>,
    },
    /// Compare relax-and-round with exhaustive enumeration on random instances.
    OracleCompare {
        #[arg(long)]
        units: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
    },
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.model {
            c.model = m.clone();
        }
        if let Some(f) = &self.fleet {
            c.fleet.file = Some(f.clone());
            c.fleet.multiplier = None;
        }
        if let Some(m) = self.multiplier {
            c.fleet.multiplier = Some(m);
            c.fleet.file = None;
        }
        if let Some(d) = &self.demand {
            c.demand.file = Some(d.clone());
        }
        if let Some(dt) = self.dt {
            c.demand.dt = dt;
        }
        if let Some(days) = self.days {
            c.demand.days = Some(days);
        }
        if let Some(s) = self.sigma_gw {
            c.demand.sigma_gw = s;
        }
        if let Some(b) = self.beta {
            c.ramp.beta = b;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        if self.parallel {
            c.sweep.parallel = true;
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<i32> {
    let mut config = cli.common.resolve()?;
    if let Command::Bench { multipliers: Some(m) } = &cli.command {
        config.bench.multipliers = m.clone();
    }
    if let Command::OracleCompare { units, instances } = &cli.command {
        config.oracle.units = units.unwrap_or(config.oracle.units);
        config.oracle.instances = instances.unwrap_or(config.oracle.instances);
    }
    config.validate()?;
    let out = config.out.clone();
    fs::create_dir_all(&out)?;
    config.write_echo(&out)?;

    match cli.command {
        Command::SynthFleet {
            reconstruct,
            base_seed,
        } => {
            let fleet = if reconstruct {
                let base = reconstruct_base_fleet(base_seed)?;
                synthesize_fleet(&base, config.fleet.multiplier.unwrap_or(1), config.seed)?
            } else {
                config.build_fleet()?
            };
            let path = out.join("fleet.json");
            fleet.save(&path)?;
            println!("{} units, {:.1} MW -> {}", fleet.len(), fleet.total_p_max, path.display());
        }
        Command::SynthDemand => {
            let fleet = config.build_fleet()?;
            let trace = config.build_demand(&fleet)?;
            let path = out.join("demand.csv");
            trace.write_csv(&path)?;
            println!("{} periods of {} min -> {}", trace.values.len(), trace.dt, path.display());
        }
        Command::Simulate => {
            let model = config.resolved_model()?;
            let fleet = config.build_fleet()?;
            let trace = config.build_demand(&fleet)?;
            let report = run_simulation(&fleet, &trace, model, &config.sim_config())?;
            report.write_outputs(&fleet, &out)?;
            println!(
                "{model}: {} units, {} periods, {:.3} s, objective/unit {:.2}, quiet periods {}/{}",
                report.n_generators,
                report.periods,
                report.wall_time,
                report.objective_per_generator,
                report.quiet_periods_after_warmup,
                report.periods - report.warmup_periods
            );
            if report.shortfall_after_warmup() {
                eprintln!("unserved demand after warm-up: max {:.3} MW", report.max_shortfall_after_warmup);
                return Ok(EXIT_SHORTFALL);
            }
        }
        Command::Bench { .. } => {
            let model = config.resolved_model()?;
            let base = match &config.fleet.file {
                Some(path) => Fleet::load(path)?,
                None => reconstructed_base_fleet(),
            };
            let study = scaling_study(
                &base,
                &config.bench.multipliers,
                model,
                &config.demand_setup(),
                &config.sim_config(),
            )?;
            study.write_outputs(&out)?;
            for r in &study.rows {
                println!("n={:5} {:9.3} s  {:.2} $/unit", r.n_generators, r.seconds, r.objective_per_generator);
            }
            println!(
                "{model}: exponent {:.3}, x{:.2} time and x{:.4} objective/unit per doubling",
                study.fitted_exponent, study.per_doubling_time_ratio, study.per_doubling_objective_ratio
            );
            if study.rows.iter().any(|r| r.shortfall_after_warmup) {
                return Ok(EXIT_SHORTFALL);
            }
        }
        Command::OracleCompare { .. } => {
            let c = compare_suite(
                config.oracle.units,
                config.oracle.instances,
                config.seed,
                &config.relax,
                &config.sweep,
            )?;
            fs::write(out.join("oracle.json"), serde_json::to_string_pretty(&c)?)?;
            println!(
                "{} instances of {} units: max gap {:.4}, median gap {:.4}, flagged {}",
                c.gaps.len(),
                config.oracle.units,
                c.max_gap,
                c.median_gap,
                c.flagged
            );
        }
    }
    Ok(EXIT_OK)
}

fn is_usage(e: &Error) -> bool {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::CapExceeded(..)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::InvalidGenerator { .. } => true,
        Error::StudyRun { source, .. } => is_usage(source),
        _ => false,
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage(&e) {
                EXIT_USAGE
            } else {
                EXIT_SHORTFALL
            }
        }
    }
}
