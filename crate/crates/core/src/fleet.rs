//! Generator data types, quadratic cost fitting and fleet synthesis.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total capacity of the 42-unit base system, MW.
pub const BASE_TOTAL_P_MAX: f64 = 9047.9;
/// Number of units in the base system.
pub const BASE_FLEET_SIZE: usize = 42;
/// Multiplier that takes the base system to the full 924-unit system.
pub const FULL_SYSTEM_MULTIPLIER: u32 = 22;

/// Quadratic production cost `a·P² + b·P + c` in $/h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CostCurve {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    #[inline]
    pub fn eval(&self, p: f64) -> f64 {
        (self.a * p + self.b) * p + self.c
    }

    /// Marginal cost `2a·P + b`.
    #[inline]
    pub fn marginal(&self, p: f64) -> f64 {
        2.0 * self.a * p + self.b
    }

    /// Average cost per MW at output `p`: `a·p + b + c/p`.
    pub fn average(&self, p: f64) -> f64 {
        self.a * p + self.b + self.c / p
    }

    /// All three coefficients multiplied by `factor` (e.g. hours per period).
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.a * factor, self.b * factor, self.c * factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fuel {
    Coal,
    Gas,
}

/// Thermal condition of a unit at start-up, decided by how long it has been off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartType {
    Hot,
    Warm,
    Cold,
}

/// Per start type values (durations in minutes or costs in $).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartTriple {
    pub hot: f64,
    pub warm: f64,
    pub cold: f64,
}

impl StartTriple {
    pub fn get(&self, kind: StartType) -> f64 {
        match kind {
            StartType::Hot => self.hot,
            StartType::Warm => self.warm,
            StartType::Cold => self.cold,
        }
    }

    fn is_ordered(&self) -> bool {
        self.hot <= self.warm && self.warm <= self.cold
    }
}

/// Immutable physical and economic description of one generating unit.
///
/// Rates are MW/min, durations minutes, costs $. `p_typ` is derived as
/// `(4·p_max + p_min)/5` and kept in sync by the constructor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeneratorRecord")]
pub struct GeneratorSpec {
    pub id: String,
    pub cost: CostCurve,
    pub p_min: f64,
    pub p_max: f64,
    pub fuel: Fuel,
    pub ramp_up_rate: f64,
    pub ramp_down_rate: f64,
    pub min_runtime: f64,
    pub max_daily_starts: u32,
    pub start_durations: StartTriple,
    pub start_costs: StartTriple,
    pub shutdown_cost: f64,
    pub p_typ: f64,
}

/// On-disk form of a generator; `p_typ` may be omitted and is checked when present.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorRecord {
    id: String,
    cost: CostCurve,
    p_min: f64,
    p_max: f64,
    fuel: Fuel,
    ramp_up_rate: f64,
    ramp_down_rate: f64,
    min_runtime: f64,
    max_daily_starts: u32,
    start_durations: StartTriple,
    start_costs: StartTriple,
    shutdown_cost: f64,
    #[serde(default)]
    p_typ: Option<f64>,
}

impl TryFrom<GeneratorRecord> for GeneratorSpec {
    type Error = Error;

    fn try_from(r: GeneratorRecord) -> Result<Self> {
        let spec = GeneratorSpec {
            id: r.id,
            cost: r.cost,
            p_min: r.p_min,
            p_max: r.p_max,
            fuel: r.fuel,
            ramp_up_rate: r.ramp_up_rate,
            ramp_down_rate: r.ramp_down_rate,
            min_runtime: r.min_runtime,
            max_daily_starts: r.max_daily_starts,
            start_durations: r.start_durations,
            start_costs: r.start_costs,
            shutdown_cost: r.shutdown_cost,
            p_typ: typical_output(r.p_min, r.p_max),
        };
        if let Some(p_typ) = r.p_typ {
            if (p_typ - spec.p_typ).abs() > 1e-9 * spec.p_typ.abs().max(1.0) {
                return Err(spec.invalid(format!(
                    "p_typ {p_typ} disagrees with (4·p_max + p_min)/5 = {}",
                    spec.p_typ
                )));
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Typical production level during a peak event.
pub fn typical_output(p_min: f64, p_max: f64) -> f64 {
    (4.0 * p_max + p_min) / 5.0
}

impl GeneratorSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        cost: CostCurve,
        p_min: f64,
        p_max: f64,
        fuel: Fuel,
        ramp_up_rate: f64,
        ramp_down_rate: f64,
        min_runtime: f64,
        max_daily_starts: u32,
        start_durations: StartTriple,
        start_costs: StartTriple,
        shutdown_cost: f64,
    ) -> Result<Self> {
        let spec = Self {
            id: id.into(),
            cost,
            p_min,
            p_max,
            fuel,
            ramp_up_rate,
            ramp_down_rate,
            min_runtime,
            max_daily_starts,
            start_durations,
            start_costs,
            shutdown_cost,
            p_typ: typical_output(p_min, p_max),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn invalid(&self, reason: String) -> Error {
        Error::InvalidGenerator {
            id: self.id.clone(),
            reason,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.cost.a,
            self.cost.b,
            self.cost.c,
            self.p_min,
            self.p_max,
            self.ramp_up_rate,
            self.ramp_down_rate,
            self.min_runtime,
            self.shutdown_cost,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(self.invalid("non-finite parameter".into()));
        }
        if self.cost.a < 0.0 {
            return Err(self.invalid(format!("cost curvature a = {} < 0", self.cost.a)));
        }
        if !(self.p_min > 0.0 && self.p_min <= self.p_max) {
            return Err(self.invalid(format!(
                "need 0 < p_min <= p_max, got {} / {}",
                self.p_min, self.p_max
            )));
        }
        if self.ramp_up_rate <= 0.0 || self.ramp_down_rate <= 0.0 {
            return Err(self.invalid("ramp rates must be positive".into()));
        }
        if self.min_runtime < 0.0 {
            return Err(self.invalid("min_runtime must be >= 0".into()));
        }
        if self.max_daily_starts < 1 {
            return Err(self.invalid("max_daily_starts must be >= 1".into()));
        }
        if !self.start_costs.is_ordered() {
            return Err(self.invalid("start costs must satisfy hot <= warm <= cold".into()));
        }
        if !self.start_durations.is_ordered() {
            return Err(self.invalid("start durations must satisfy hot <= warm <= cold".into()));
        }
        Ok(())
    }

    /// Average cost at the typical output level; the priority-list key.
    pub fn average_cost_at_typical(&self) -> f64 {
        self.cost.average(self.p_typ)
    }
}

/// An ordered collection of generators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fleet {
    pub generators: Vec<GeneratorSpec>,
    pub base_multiplier: u32,
    pub total_p_max: f64,
}

impl Fleet {
    pub fn new(generators: Vec<GeneratorSpec>, base_multiplier: u32) -> Result<Self> {
        let mut seen = HashSet::with_capacity(generators.len());
        for g in &generators {
            if !seen.insert(g.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate generator id {}", g.id)));
            }
        }
        let total_p_max = generators.iter().map(|g| g.p_max).sum();
        Ok(Self {
            generators,
            base_multiplier,
            total_p_max,
        })
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Parses a JSON array of generator records.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let generators: Vec<GeneratorSpec> = serde_json::from_str(text)?;
        Self::new(generators, 1)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.generators)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Least-squares quadratic through piecewise-linear bid points `(MW, $/h)`.
///
/// Solved by Householder QR on the column-scaled Vandermonde matrix. A
/// negative curvature is clamped to zero and the linear part refitted.
pub fn fit_quadratic_cost(points: &[(f64, f64)]) -> Result<CostCurve> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 || points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::DegenerateFit(xs.len()));
    }
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.0.abs()));
    let rows: Vec<[f64; 3]> = points
        .iter()
        .map(|&(p, _)| {
            let x = p / scale;
            [x * x, x, 1.0]
        })
        .collect();
    let rhs: Vec<f64> = points.iter().map(|p| p.1).collect();
    let coef = least_squares::<3>(&rows, &rhs);
    let a = coef[0] / (scale * scale);
    if a >= 0.0 {
        return Ok(CostCurve::new(a, coef[1] / scale, coef[2]));
    }
    let rows: Vec<[f64; 2]> = points.iter().map(|&(p, _)| [p / scale, 1.0]).collect();
    let coef = least_squares::<2>(&rows, &rhs);
    Ok(CostCurve::new(0.0, coef[0] / scale, coef[1]))
}

/// Dense Householder least squares for a tall matrix with `N` columns.
fn least_squares<const N: usize>(rows: &[[f64; N]], rhs: &[f64]) -> [f64; N] {
    let m = rows.len();
    let mut cols: Vec<Vec<f64>> = (0..N).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut b = rhs.to_vec();
    for k in 0..N {
        let norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for col in cols.iter_mut().skip(k) {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[k..]).map(|(a, b)| a * b).sum();
        let f = 2.0 * dot / vnorm2;
        for (bi, vi) in b[k..m].iter_mut().zip(&v) {
            *bi -= f * vi;
        }
    }
    let mut x = [0.0; N];
    for k in (0..N).rev() {
        let mut s = b[k];
        for j in k + 1..N {
            s -= cols[j][k] * x[j];
        }
        x[k] = s / cols[k][k];
    }
    x
}

/// Replicates `base` `multiplier` times with seeded symmetry-breaking jitter.
///
/// Copy 1 of each unit is exact. Later copies scale `p_min` and `p_max` by
/// independent factors in `[0.9, 1.1]` (ramp rates follow `p_max` so their
/// %/min value is preserved) and shift `max_daily_starts` and the runtime
/// hours by an integer in `{-1, 0, +1}`.
pub fn synthesize_fleet(base: &Fleet, multiplier: u32, seed: u64) -> Result<Fleet> {
    if multiplier < 1 {
        return Err(Error::InvalidArgument("multiplier must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut generators = Vec::with_capacity(base.len() * multiplier as usize);
    generators.extend(base.generators.iter().cloned());
    for copy in 2..=multiplier {
        for g in &base.generators {
            let f_max: f64 = rng.gen_range(0.9..=1.1);
            let f_min: f64 = rng.gen_range(0.9..=1.1);
            let d_starts: i64 = rng.gen_range(-1..=1);
            let d_hours: i64 = rng.gen_range(-1..=1);

            let p_max = g.p_max * f_max;
            let p_min = (g.p_min * f_min).min(p_max);
            let starts = (g.max_daily_starts as i64 + d_starts).max(1) as u32;
            let hours = (g.min_runtime / 60.0 + d_hours as f64).max(0.0);

            let spec = GeneratorSpec::new(
                format!("{}-k{:03}", g.id, copy),
                g.cost,
                p_min,
                p_max,
                g.fuel,
                g.ramp_up_rate * f_max,
                g.ramp_down_rate * f_max,
                hours * 60.0,
                starts,
                g.start_durations,
                g.start_costs,
                g.shutdown_cost,
            )?;
            generators.push(spec);
        }
    }
    Fleet::new(generators, base.base_multiplier * multiplier)
}

/// The bundled 42-unit base fleet (reconstructed, see [`reconstruct_base_fleet`]).
pub fn reconstructed_base_fleet() -> Fleet {
    Fleet::from_json_str(include_str!("../data/base_fleet.json"))
        .expect("bundled base fleet is valid")
}

/// Seed used to produce the bundled base fleet file.
pub const BASE_FLEET_SEED: u64 = 20250623;

/// Builds a 42-unit base system from per-fuel parameter ranges.
///
/// The individual unit data are not public, so parameters are drawn
/// uniformly from the published coal/gas ranges (minimum runtime, daily
/// starts, start durations, relative start costs, ramp %/min), piecewise
/// linear bids are generated per unit and fitted with
/// [`fit_quadratic_cost`], and capacities are normalised so that the fleet
/// totals exactly 9047.9 MW. Shutdown cost is half the hot start cost.
pub fn reconstruct_base_fleet(seed: u64) -> Result<Fleet> {
    const COAL_UNITS: usize = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let fuels: Vec<Fuel> = (0..BASE_FLEET_SIZE)
        .map(|i| if i < COAL_UNITS { Fuel::Coal } else { Fuel::Gas })
        .collect();
    let raw_max: Vec<f64> = fuels
        .iter()
        .map(|f| match f {
            Fuel::Coal => rng.gen_range(400.0..1000.0),
            Fuel::Gas => rng.gen_range(40.0..230.0),
        })
        .collect();
    let scale = BASE_TOTAL_P_MAX / raw_max.iter().sum::<f64>();
    let mut p_maxs: Vec<f64> = raw_max.iter().map(|p| round_to(p * scale, 0.1)).collect();
    let residual = BASE_TOTAL_P_MAX - p_maxs.iter().sum::<f64>();
    *p_maxs.last_mut().unwrap() = round_to(p_maxs.last().unwrap() + residual, 0.1);

    let mut generators = Vec::with_capacity(BASE_FLEET_SIZE);
    for (i, (&fuel, &p_max)) in fuels.iter().zip(&p_maxs).enumerate() {
        let coal = fuel == Fuel::Coal;
        let min_frac = if coal { rng.gen_range(0.35..0.5) } else { rng.gen_range(0.25..0.45) };
        let p_min = round_to(p_max * min_frac, 0.1);
        let up_pct = if coal { rng.gen_range(1.0..6.0) } else { rng.gen_range(2.0..12.0) };
        let down_pct = if coal { 5.0 } else { 15.0 };
        let runtime_h: u32 = if coal { rng.gen_range(4..=24) } else { rng.gen_range(0..=24) };
        let starts: u32 = if coal { rng.gen_range(1..=3) } else { rng.gen_range(1..=24) };

        let (hot_d, warm_d, cold_d) = if coal {
            (
                rng.gen_range(60.0..240.0f64),
                rng.gen_range(120.0..480.0f64),
                rng.gen_range(360.0..720.0f64),
            )
        } else {
            (
                rng.gen_range(25.0..120.0f64),
                rng.gen_range(60.0..240.0f64),
                rng.gen_range(120.0..300.0f64),
            )
        };
        let hot_d = hot_d.round();
        let warm_d = warm_d.round().max(hot_d);
        let cold_d = cold_d.round().max(warm_d);

        let hot_per_mw = if coal { rng.gen_range(40.0..100.0) } else { rng.gen_range(20.0..60.0) };
        let hot_c = round_to(hot_per_mw * p_max, 1.0);
        let warm_ratio = if coal { rng.gen_range(1.19..1.42) } else { rng.gen_range(1.12..1.58) };
        let cold_ratio = if coal { rng.gen_range(1.74..1.93) } else { rng.gen_range(1.35..2.25) };
        let warm_c = round_to(hot_c * warm_ratio, 1.0);
        let cold_c = round_to(hot_c * cold_ratio, 1.0).max(warm_c);

        // Four-segment bid curve from p_min to p_max with rising prices.
        let no_load = p_max * rng.gen_range(2.0..6.0);
        let mut price = if coal { rng.gen_range(12.0..22.0) } else { rng.gen_range(25.0..45.0) };
        let mut bids = vec![(p_min, no_load + price * p_min)];
        let step = (p_max - p_min) / 4.0;
        for k in 1..=4 {
            price += if coal { rng.gen_range(0.5..2.5) } else { rng.gen_range(1.0..4.0) };
            let (p_prev, c_prev) = bids[k - 1];
            bids.push((p_prev + step, c_prev + price * step));
        }
        let cost = fit_quadratic_cost(&bids)?;

        generators.push(GeneratorSpec::new(
            format!("G{:02}", i + 1),
            cost,
            p_min,
            p_max,
            fuel,
            up_pct / 100.0 * p_max,
            down_pct / 100.0 * p_max,
            runtime_h as f64 * 60.0,
            starts,
            StartTriple { hot: hot_d, warm: warm_d, cold: cold_d },
            StartTriple { hot: hot_c, warm: warm_c, cold: cold_c },
            0.5 * hot_c,
        )?);
    }
    Fleet::new(generators, 1)
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: &str, p_min: f64, p_max: f64) -> GeneratorSpec {
        GeneratorSpec::new(
            id,
            CostCurve::new(0.01, 20.0, 100.0),
            p_min,
            p_max,
            Fuel::Gas,
            5.0,
            10.0,
            120.0,
            3,
            StartTriple { hot: 30.0, warm: 60.0, cold: 120.0 },
            StartTriple { hot: 1000.0, warm: 1300.0, cold: 1800.0 },
            500.0,
        )
        .unwrap()
    }

    #[test]
    fn exact_parabola_is_recovered() {
        let c = fit_quadratic_cost(&[(1.0, 1.0), (2.0, 4.0), (3.0, 9.0)]).unwrap();
        assert!((c.a - 1.0).abs() < 1e-12);
        assert!(c.b.abs() < 1e-10);
        assert!(c.c.abs() < 1e-10);
    }

    #[test]
    fn linear_bids_fit_with_zero_curvature() {
        let c = fit_quadratic_cost(&[(10.0, 100.0), (20.0, 200.0), (30.0, 300.0)]).unwrap();
        assert!(c.a.abs() < 1e-12);
        assert!((c.b - 10.0).abs() < 1e-9);
        assert!(c.c.abs() < 1e-8);
    }

    #[test]
    fn concave_bids_are_clamped() {
        let c = fit_quadratic_cost(&[(0.0, 0.0), (1.0, 3.0), (2.0, 4.0), (3.0, 3.0)]).unwrap();
        assert_eq!(c.a, 0.0);
        // linear least squares through the same points
        assert!((c.b - 1.0).abs() < 1e-9);
        assert!((c.c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_distinct_points_is_degenerate() {
        let err = fit_quadratic_cost(&[(1.0, 1.0), (1.0, 2.0), (2.0, 3.0)]).unwrap_err();
        assert!(matches!(err, Error::DegenerateFit(2)));
    }

    #[test]
    fn typical_output_is_four_fifths_weighted() {
        let g = unit("a", 100.0, 300.0);
        assert_eq!(g.p_typ, (4.0 * 300.0 + 100.0) / 5.0);
    }

    #[test]
    fn spec_invariants_are_enforced() {
        let mut g = unit("a", 100.0, 300.0);
        g.p_min = 400.0;
        assert!(g.validate().is_err());
        let mut g = unit("a", 100.0, 300.0);
        g.start_costs.warm = 2000.0;
        assert!(g.validate().is_err());
        let mut g = unit("a", 100.0, 300.0);
        g.max_daily_starts = 0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Fleet::new(vec![unit("a", 1.0, 2.0), unit("a", 1.0, 2.0)], 1).is_err());
    }

    #[test]
    fn multiplier_one_is_identity() {
        let base = Fleet::new(vec![unit("a", 10.0, 50.0), unit("b", 20.0, 80.0)], 1).unwrap();
        assert_eq!(synthesize_fleet(&base, 1, 99).unwrap(), base);
        assert!(synthesize_fleet(&base, 0, 99).is_err());
    }

    #[test]
    fn base_fleet_totals_published_capacity() {
        let f = reconstructed_base_fleet();
        assert_eq!(f.len(), BASE_FLEET_SIZE);
        assert!((f.total_p_max - BASE_TOTAL_P_MAX).abs() < 1e-6);
        assert!(f.generators.iter().all(|g| g.fuel == Fuel::Coal || g.p_max <= 1000.0));
    }

    #[test]
    fn bundled_fleet_matches_generator() {
        let generated = reconstruct_base_fleet(BASE_FLEET_SEED).unwrap();
        let bundled = reconstructed_base_fleet();
        assert_eq!(generated.len(), bundled.len());
        for (g, b) in generated.generators.iter().zip(&bundled.generators) {
            assert_eq!(g.id, b.id);
            assert!((g.p_max - b.p_max).abs() < 1e-9);
            assert!((g.cost.b - b.cost.b).abs() < 1e-9 * g.cost.b.abs());
        }
    }
}
