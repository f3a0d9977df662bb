//! Demand traces and 72-hour forecast statistics.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forecast look-ahead used by the reserve constraints, minutes.
pub const FORECAST_WINDOW_MINUTES: u32 = 72 * 60;

/// Time-indexed demand series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandTrace {
    /// Minutes per period.
    pub dt: u32,
    /// MW per period.
    pub values: Vec<f64>,
    /// Standard deviation of the demand forecast, MW.
    pub sigma_d: f64,
    pub horizon: usize,
}

impl DemandTrace {
    pub fn new(dt: u32, values: Vec<f64>, sigma_d: f64) -> Result<Self> {
        if dt == 0 {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if values.is_empty() {
            return Err(Error::InvalidArgument("demand trace is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidArgument(format!("demand values must be > 0, got {v}")));
        }
        if !(sigma_d.is_finite() && sigma_d >= 0.0) {
            return Err(Error::InvalidArgument("sigma_d must be >= 0".into()));
        }
        let horizon = values.len();
        Ok(Self {
            dt,
            values,
            sigma_d,
            horizon,
        })
    }

    pub fn periods_per_day(&self) -> usize {
        (24 * 60 / self.dt) as usize
    }

    /// Every value and `sigma_d` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.dt,
            self.values.iter().map(|v| v * factor).collect(),
            self.sigma_d * factor,
        )
    }

    /// Reads `period_index,demand_mw` with a header row.
    pub fn from_csv(path: &Path, dt: u32, sigma_d: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "period_index" || &headers[1] != "demand_mw" {
            return Err(Error::InvalidArgument(format!(
                "demand CSV header must be `period_index,demand_mw`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut values = Vec::new();
        for (row, record) in reader.deserialize::<(usize, f64)>().enumerate() {
            let (index, mw) = record?;
            if index != row {
                return Err(Error::InvalidArgument(format!(
                    "demand CSV period_index {index} at row {row}; indices must be 0,1,2,..."
                )));
            }
            values.push(mw);
        }
        Self::new(dt, values, sigma_d)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["period_index", "demand_mw"])?;
        for (i, v) in self.values.iter().enumerate() {
            writer.write_record([i.to_string(), v.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Demand statistics over the 72-hour window starting at one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastWindow {
    pub d_now: f64,
    pub d_min_72: f64,
    pub d_max_72: f64,
    pub sigma_d: f64,
}

/// Synthetic diurnal trace.
///
/// Each day bottoms out at `low` at 04:00 and peaks at 16:00. The afternoon
/// peak follows a linear envelope that rises to `peak` on the peak day (three
/// quarters through the horizon) and falls afterwards; off-peak days get a
/// small seeded jitter on the envelope. The amplitude is interpolated between
/// afternoons so the trace has no steps. `sigma_d` is set to zero; callers
/// attach the forecast error they want.
pub fn synthesize_demand(low: f64, peak: f64, days: u32, dt: u32, seed: u64) -> Result<DemandTrace> {
    if !(low > 0.0 && low < peak && peak.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 < low < peak, got {low} / {peak}")));
    }
    if days < 1 {
        return Err(Error::InvalidArgument("days must be >= 1".into()));
    }
    if dt == 0 || 60 % dt != 0 {
        return Err(Error::InvalidArgument(format!("dt = {dt} must divide 60")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let peak_day = ((days * 3) / 4).min(days - 1) as usize;
    let envelope: Vec<f64> = (0..days as usize)
        .map(|d| {
            if d == peak_day {
                return 1.0;
            }
            let distance = (d as f64 - peak_day as f64).abs();
            let base = (1.0 - 0.06 * distance).max(0.55);
            (base - rng.gen_range(0.0..0.04)).clamp(0.5, 0.99)
        })
        .collect();

    let amplitude = peak - low;
    let per_day = (24 * 60 / dt) as usize;
    let n = per_day * days as usize;
    let minutes_per_day = 24.0 * 60.0;
    let values = (0..n)
        .map(|i| {
            let minute = (i as u64 * dt as u64) as f64;
            // Envelope knots sit at 16:00 of each day.
            let day_pos = (minute - 16.0 * 60.0) / minutes_per_day;
            let env = if day_pos <= 0.0 {
                envelope[0]
            } else {
                let k = day_pos.floor() as usize;
                if k + 1 >= envelope.len() {
                    envelope[envelope.len() - 1]
                } else {
                    let frac = day_pos - k as f64;
                    envelope[k] * (1.0 - frac) + envelope[k + 1] * frac
                }
            };
            let phase = 2.0 * PI * (minute - 4.0 * 60.0) / minutes_per_day;
            let shape = 0.5 * (1.0 - phase.cos());
            low + amplitude * env * shape
        })
        .collect();
    DemandTrace::new(dt, values, 0.0)
}

/// Number of periods covered by the 72-hour look-ahead.
pub fn window_len(dt: u32) -> usize {
    (FORECAST_WINDOW_MINUTES / dt).max(1) as usize
}

/// Demand extremes over `[t, t + 72h/dt)`, clipped at the end of the trace.
pub fn forecast_stats(
    trace: &DemandTrace,
    t: usize,
    base_sigma: f64,
    demand_multiplier: f64,
) -> Result<ForecastWindow> {
    if t >= trace.values.len() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: trace.values.len(),
        });
    }
    let end = (t + window_len(trace.dt)).min(trace.values.len());
    let slice = &trace.values[t..end];
    let (lo, hi) = slice
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(ForecastWindow {
        d_now: trace.values[t],
        d_min_72: lo,
        d_max_72: hi,
        sigma_d: base_sigma * demand_multiplier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_days_at_five_minutes_is_2304_periods() {
        let trace = synthesize_demand(78_600.0, 160_200.0, 8, 5, 1).unwrap();
        assert_eq!(trace.horizon, 2304);
        assert_eq!(trace.values.len(), 2304);
    }

    #[test]
    fn daily_minimum_and_peak_are_hit() {
        let trace = synthesize_demand(78_600.0, 160_200.0, 8, 5, 3).unwrap();
        let max = trace.values.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 160_200.0).abs() < 1e-6);
        for day in trace.values.chunks(trace.periods_per_day()) {
            let min = day.iter().cloned().fold(f64::MAX, f64::min);
            assert!((min - 78_600.0).abs() < 1e-6, "day min {min}");
        }
    }

    #[test]
    fn steps_stay_below_one_percent_of_peak() {
        let trace = synthesize_demand(78_600.0, 160_200.0, 8, 5, 11).unwrap();
        for w in trace.values.windows(2) {
            assert!((w[1] - w[0]).abs() <= 0.01 * 160_200.0);
        }
    }

    #[test]
    fn degenerate_amplitude_is_flat() {
        let eps = 1e-6;
        let trace = synthesize_demand(100.0 - eps, 100.0, 2, 5, 0).unwrap();
        let max = trace.values.iter().cloned().fold(f64::MIN, f64::max);
        let min = trace.values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max - min <= eps + 1e-12);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synthesize_demand(50.0, 90.0, 3, 15, 42).unwrap();
        let b = synthesize_demand(50.0, 90.0, 3, 15, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_arguments_rejected() {
        assert!(synthesize_demand(10.0, 5.0, 1, 5, 0).is_err());
        assert!(synthesize_demand(1.0, 5.0, 0, 5, 0).is_err());
        assert!(synthesize_demand(1.0, 5.0, 1, 7, 0).is_err());
    }

    #[test]
    fn window_extremes_and_tail() {
        // dt = 1440 min → a 72 h window spans 3 periods
        let trace = DemandTrace::new(1440, vec![1000.0, 2000.0, 3000.0, 4000.0], 10.0).unwrap();
        let fw = forecast_stats(&trace, 0, 1000.0, 1.0).unwrap();
        assert_eq!((fw.d_min_72, fw.d_max_72), (1000.0, 3000.0));
        assert_eq!(fw.sigma_d, 1000.0);
        let last = forecast_stats(&trace, 3, 1000.0, 2.0).unwrap();
        assert_eq!((last.d_min_72, last.d_max_72, last.d_now), (4000.0, 4000.0, 4000.0));
        assert_eq!(last.sigma_d, 2000.0);
        assert!(matches!(
            forecast_stats(&trace, 4, 1.0, 1.0),
            Err(Error::IndexOutOfRange { index: 4, len: 4 })
        ));
    }

    #[test]
    fn constant_trace_window() {
        let trace = DemandTrace::new(5, vec![7.0; 100], 0.0).unwrap();
        let fw = forecast_stats(&trace, 10, 1.0, 1.0).unwrap();
        assert_eq!((fw.d_min_72, fw.d_max_72), (7.0, 7.0));
    }
}
