//! Scaling study across fleet multiples.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::demand::{synthesize_demand, DemandTrace};
use crate::error::{Error, Result};
use crate::fleet::{synthesize_fleet, Fleet, FULL_SYSTEM_MULTIPLIER};
use crate::sim::{run_simulation, Model, SimConfig};

/// Demand of the full (22× base) system; smaller systems scale linearly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandSetup {
    pub low_mw: f64,
    pub peak_mw: f64,
    pub sigma_mw: f64,
    pub days: u32,
    pub dt: u32,
    pub seed: u64,
}

impl Default for DemandSetup {
    fn default() -> Self {
        Self {
            low_mw: 78_600.0,
            peak_mw: 160_200.0,
            sigma_mw: 1_000.0,
            days: 8,
            dt: 5,
            seed: 0,
        }
    }
}

impl DemandSetup {
    /// Fraction of the full system represented by `multiplier` base fleets.
    pub fn share(multiplier: u32) -> f64 {
        multiplier as f64 / FULL_SYSTEM_MULTIPLIER as f64
    }

    pub fn trace(&self, multiplier: u32) -> Result<DemandTrace> {
        let s = Self::share(multiplier);
        let mut trace = synthesize_demand(self.low_mw * s, self.peak_mw * s, self.days, self.dt, self.seed)?;
        trace.sigma_d = self.sigma_mw * s;
        Ok(trace)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub multiplier: u32,
    pub n_generators: usize,
    pub seconds: f64,
    pub objective_per_generator: f64,
    pub shortfall_after_warmup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub model: Model,
    /// Sorted by fleet size.
    pub rows: Vec<ScalingRow>,
    pub fitted_exponent: f64,
    /// Geometric mean growth of wall time per doubling of the fleet.
    pub per_doubling_time_ratio: f64,
    /// Largest per-doubling growth of the objective per generator.
    pub per_doubling_objective_ratio: f64,
    /// Per-doubling objective growth between consecutive rows.
    pub objective_ratios: Vec<f64>,
}

/// Least-squares slope of `ln t` against `ln n`.
pub fn fit_power_law(sizes: &[f64], times: &[f64]) -> Result<f64> {
    if sizes.len() != times.len() {
        return Err(Error::InvalidArgument(format!(
            "{} sizes but {} times",
            sizes.len(),
            times.len()
        )));
    }
    if sizes.len() < 3 {
        return Err(Error::DegenerateFit(sizes.len()));
    }
    if sizes.iter().chain(times).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("power-law fit needs positive finite data".into()));
    }
    let x: Vec<f64> = sizes.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = times.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= f64::EPSILON * k {
        return Err(Error::DegenerateFit(sizes.len()));
    }
    Ok(sxy / sxx)
}

/// Growth of `b/a` normalised to one doubling of size from `na` to `nb`.
fn per_doubling(a: f64, b: f64, na: f64, nb: f64) -> f64 {
    (b / a).powf(1.0 / (nb / na).log2())
}

/// Simulates each multiple of `base` and fits the runtime scaling.
///
/// Runs execute one after another so that wall times do not interfere.
pub fn scaling_study(
    base: &Fleet,
    multipliers: &[u32],
    model: Model,
    demand: &DemandSetup,
    config: &SimConfig,
) -> Result<ScalingReport> {
    if multipliers.len() < 3 {
        return Err(Error::InvalidArgument("scaling study needs at least three multipliers".into()));
    }
    let mut rows = Vec::with_capacity(multipliers.len());
    for &m in multipliers {
        let run = || -> Result<ScalingRow> {
            let fleet = synthesize_fleet(base, m, demand.seed)?;
            let trace = demand.trace(m)?;
            let started = Instant::now();
            let report = run_simulation(&fleet, &trace, model, config)?;
            let elapsed = started.elapsed().as_secs_f64();
            log::info!("{model} n={} {:.2}s", fleet.len(), elapsed);
            Ok(ScalingRow {
                multiplier: m,
                n_generators: fleet.len(),
                seconds: report.wall_time.max(f64::MIN_POSITIVE),
                objective_per_generator: report.objective_per_generator,
                shortfall_after_warmup: report.shortfall_after_warmup(),
            })
        };
        rows.push(run().map_err(|e| Error::StudyRun {
            n: base.len() * m as usize,
            source: Box::new(e),
        })?);
    }
    rows.sort_by_key(|r| r.n_generators);
    summarize(model, rows)
}

/// Fits exponent and ratios for already measured rows.
pub fn summarize(model: Model, rows: Vec<ScalingRow>) -> Result<ScalingReport> {
    let sizes: Vec<f64> = rows.iter().map(|r| r.n_generators as f64).collect();
    let times: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
    let fitted_exponent = fit_power_law(&sizes, &times)?;
    let pairs = rows.windows(2).filter(|w| w[1].n_generators > w[0].n_generators);
    let time_logs: Vec<f64> = pairs
        .clone()
        .map(|w| per_doubling(w[0].seconds, w[1].seconds, w[0].n_generators as f64, w[1].n_generators as f64).ln())
        .collect();
    let objective_ratios: Vec<f64> = pairs
        .map(|w| {
            per_doubling(
                w[0].objective_per_generator,
                w[1].objective_per_generator,
                w[0].n_generators as f64,
                w[1].n_generators as f64,
            )
        })
        .collect();
    let per_doubling_time_ratio = (time_logs.iter().sum::<f64>() / time_logs.len().max(1) as f64).exp();
    let per_doubling_objective_ratio = objective_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ScalingReport {
        model,
        rows,
        fitted_exponent,
        per_doubling_time_ratio,
        per_doubling_objective_ratio,
        objective_ratios,
    })
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,seconds,objective_per_gen\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.n_generators, r.seconds, r.objective_per_generator);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn write_svg(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_svg())?;
        Ok(())
    }

    /// Writes `scaling.csv`, `scaling.svg` and `scaling.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_csv(&dir.join("scaling.csv"))?;
        self.write_svg(&dir.join("scaling.svg"))?;
        fs::write(dir.join("scaling.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Two panels: log-log wall time and objective per generator against n.
    pub fn to_svg(&self) -> String {
        const W: f64 = 360.0;
        const H: f64 = 260.0;
        const PAD: f64 = 50.0;
        let n: Vec<f64> = self.rows.iter().map(|r| r.n_generators as f64).collect();
        let t: Vec<f64> = self.rows.iter().map(|r| r.seconds).collect();
        let o: Vec<f64> = self.rows.iter().map(|r| r.objective_per_generator).collect();

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
            2.0 * W,
            H
        );
        let panels = [
            ("wall time [s] (log-log)", &t, true, 0.0),
            ("objective per generator [$]", &o, false, W),
        ];
        for (title, ys, log_y, x0) in panels {
            let fx = |v: f64| v.ln();
            let fy = |v: f64| if log_y { v.max(f64::MIN_POSITIVE).ln() } else { v };
            let (xl, xh) = bounds(n.iter().map(|&v| fx(v)));
            let (yl, yh) = bounds(ys.iter().map(|&v| fy(v)));
            let px = |v: f64| x0 + PAD + (fx(v) - xl) / (xh - xl) * (W - 2.0 * PAD);
            let py = |v: f64| H - PAD - (fy(v) - yl) / (yh - yl) * (H - 2.0 * PAD);
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
                x0 + PAD,
                PAD,
                W - 2.0 * PAD,
                H - 2.0 * PAD
            );
            let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, x0 + PAD, PAD - 10.0, title);
            let _ = writeln!(svg, r#"<text x="{}" y="{}">n</text>"#, x0 + W / 2.0, H - 12.0);
            let points: Vec<String> = n
                .iter()
                .zip(ys.iter())
                .map(|(&a, &b)| format!("{:.1},{:.1}", px(a), py(b)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
                points.join(" ")
            );
            for (&a, &b) in n.iter().zip(ys.iter()) {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="steelblue"/><text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                    px(a),
                    py(b),
                    px(a),
                    H - PAD + 14.0,
                    a
                );
            }
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}: exponent {:.2}, x{:.2} time per doubling</text>"#,
            PAD,
            H - 28.0,
            self.model,
            self.fitted_exponent,
            self.per_doubling_time_ratio
        );
        svg.push_str("</svg>\n");
        svg
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let n = [42.0, 84.0, 168.0, 336.0];
        let t: Vec<f64> = n.iter().map(|v: &f64| v.powf(1.5)).collect();
        assert!((fit_power_law(&n, &t).unwrap() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn flat_times_fit_zero() {
        let n = [10.0, 20.0, 40.0];
        assert!(fit_power_law(&n, &[3.0; 3]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(fit_power_law(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::DegenerateFit(2))));
        assert!(fit_power_law(&[1.0, 2.0, 0.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(fit_power_law(&[5.0; 3], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn summary_ratios() {
        let rows = [(42, 1.0, 100.0), (84, 2.6, 104.0), (168, 2.6 * 2.6, 104.0)]
            .map(|(n, s, o)| ScalingRow {
                multiplier: n as u32 / 42,
                n_generators: n,
                seconds: s,
                objective_per_generator: o,
                shortfall_after_warmup: false,
            })
            .to_vec();
        let r = summarize(Model::Runtime, rows).unwrap();
        assert!((r.per_doubling_time_ratio - 2.6).abs() < 1e-12);
        assert!((r.fitted_exponent - 2.6f64.log2()).abs() < 1e-12);
        assert!((r.per_doubling_objective_ratio - 1.04).abs() < 1e-12);
        assert_eq!(r.to_csv().lines().count(), 4);
        assert!(r.to_svg().starts_with("<svg"));
    }

    #[test]
    fn demand_scales_with_share() {
        let setup = DemandSetup {
            days: 2,
            ..Default::default()
        };
        let a = setup.trace(1).unwrap();
        let b = setup.trace(2).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((2.0 * x - y).abs() < 1e-9 * y);
        }
        assert!((a.sigma_d - 1000.0 / 22.0).abs() < 1e-12);
    }
}
