//! Reference implementations used as test oracles.
//!
//! Nothing here calls into the solver paths it checks: dispatch is found by
//! grid search, least squares by normal equations, stationarity by finite
//! differences and constraint satisfaction by scanning the decision log.

#![allow(dead_code)]

use rand::Rng;
use rruc::dispatch::{DispatchProblem, DispatchUnit};
use rruc::fleet::{CostCurve, GeneratorSpec};
use rruc::relaxation::{MustRunUnit, RelaxedProblem, RelaxedSolution, RelaxedUnit};
use rruc::rounding::PeriodDecision;
use rruc::runtime::Stage;

pub const GRID_MW: f64 = 0.01;

/// Grid dispatch: outputs on the 0.01 MW lattice of each unit's range.
#[derive(Debug, Clone)]
pub struct GridDispatch {
    pub outputs: Vec<f64>,
    pub lambda: f64,
    pub objective: f64,
}

fn lattice(u: &DispatchUnit) -> (usize, impl Fn(usize) -> f64 + '_) {
    let n = ((u.upper - u.lower) / GRID_MW).ceil().max(0.0) as usize;
    (n, move |k: usize| (u.lower + k as f64 * GRID_MW).min(u.upper))
}

/// Lattice point minimising `cost(P) − λP`. The objective is convex along
/// the lattice, so the first non-negative forward difference marks the minimum.
pub fn grid_argmin(u: &DispatchUnit, lambda: f64) -> f64 {
    let (n, at) = lattice(u);
    let h = |k: usize| u.cost.eval(at(k)) - lambda * at(k);
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if h(mid + 1) - h(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    at(lo)
}

/// Smallest price whose lattice supply covers demand, found by bisection.
pub fn grid_dispatch(problem: &DispatchProblem) -> Option<GridDispatch> {
    let units = &problem.units;
    let upper: f64 = units.iter().map(|u| u.upper).sum();
    if upper < problem.demand {
        return None;
    }
    let supply = |lam: f64| -> f64 { units.iter().map(|u| grid_argmin(u, lam)).sum() };
    let mut lo = units
        .iter()
        .map(|u| u.cost.marginal(u.lower))
        .fold(f64::INFINITY, f64::min)
        - 1.0;
    let mut hi = units
        .iter()
        .map(|u| u.cost.marginal(u.upper))
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    let lambda = if supply(lo) >= problem.demand {
        lo
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if supply(mid) >= problem.demand {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let outputs: Vec<f64> = units.iter().map(|u| grid_argmin(u, lambda)).collect();
    let objective = units
        .iter()
        .zip(&outputs)
        .map(|(u, &p)| u.cost.eval(p) + u.start_penalty)
        .sum();
    Some(GridDispatch {
        outputs,
        lambda,
        objective,
    })
}

/// Random dispatch unit with per-hour cost coefficients in typical ranges.
pub fn random_dispatch_unit<R: Rng>(rng: &mut R) -> DispatchUnit {
    let lower = rng.gen_range(5.0..200.0);
    let upper = lower + rng.gen_range(20.0..600.0);
    let cost = CostCurve::new(
        rng.gen_range(0.001..0.05),
        rng.gen_range(10.0..60.0),
        rng.gen_range(50.0..2000.0),
    );
    DispatchUnit::new(cost, lower, upper, rng.gen_range(0.0..5000.0))
}

/// Random relaxed problem that is feasible at a uniform score.
pub fn random_relaxed_problem<R: Rng>(rng: &mut R) -> RelaxedProblem {
    let n = rng.gen_range(2..=15);
    let per_period = 5.0 / 60.0;
    let mut units = Vec::with_capacity(n);
    for _ in 0..n {
        let p_lo: f64 = rng.gen_range(20.0..300.0);
        let p_hi = p_lo + rng.gen_range(10.0..500.0);
        let cost = CostCurve::new(
            rng.gen_range(0.001..0.05),
            rng.gen_range(10.0..60.0),
            rng.gen_range(50.0..2000.0),
        )
        .scaled(per_period);
        let kind = rng.gen_range(0..4);
        let (has_output, anchor, score_cost, fallback_supply) = match kind {
            0 => (false, 0.0, rng.gen_range(0.0..5.0), 0.0),
            1 => (true, 1.0, 0.0, rng.gen_range(0.0..p_lo)),
            2 => (true, 1.0, 0.0, 0.0),
            _ => (true, 0.0, 0.0, 0.0),
        };
        units.push(RelaxedUnit {
            cost,
            p_lo,
            p_hi,
            has_output,
            anchor,
            switch_penalty: rng.gen_range(0.0..3000.0),
            score_cost,
            fallback_supply,
            cap_max: p_hi,
            cap_min: p_lo,
        });
    }
    let must_run: Vec<MustRunUnit> = (0..rng.gen_range(0..=3))
        .map(|_| {
            let p_lo = rng.gen_range(20.0..200.0);
            MustRunUnit {
                cost: CostCurve::new(rng.gen_range(0.001..0.05), rng.gen_range(10.0..60.0), 100.0)
                    .scaled(per_period),
                p_lo,
                p_hi: p_lo + rng.gen_range(10.0..300.0),
            }
        })
        .collect();
    let must_run_p_max: f64 = must_run.iter().map(|m| m.p_hi).sum();
    let must_run_p_min: f64 = must_run.iter().map(|m| m.p_lo).sum();
    let cap_max: f64 = units.iter().map(|u| u.cap_max).sum();
    let cap_min: f64 = units.iter().map(|u| u.cap_min).sum();
    let c = rng.gen_range(0.3..0.7);
    let f = rng.gen_range(c + 0.05..1.0);
    let supply_at_c: f64 = must_run_p_max
        + units
            .iter()
            .map(|u| {
                let on = if u.has_output { u.p_hi } else { 0.0 };
                c * on + (1.0 - c) * u.fallback_supply
            })
            .sum::<f64>();
    RelaxedProblem {
        demand: rng.gen_range(0.3..0.9) * supply_at_c,
        capacity_rhs: must_run_p_max + c * cap_max,
        floor_rhs: must_run_p_min + f * cap_min,
        units,
        must_run,
        must_run_p_max,
        must_run_p_min,
    }
}

/// Quadratic least squares `[a, b, c]` through the normal equations.
///
/// Abscissae are scaled by their largest magnitude before forming `VᵀV`;
/// the 3×3 system is solved by elimination with partial pivoting.
pub fn normal_equations_fit(points: &[(f64, f64)]) -> [f64; 3] {
    let s = points.iter().fold(0.0f64, |m, p| m.max(p.0.abs()));
    let mut m = [[0.0f64; 4]; 3];
    for &(p, y) in points {
        let x = p / s;
        let row = [x * x, x, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
            m[i][3] += row[i] * y;
        }
    }
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for k in col..4 {
                m[r][k] -= f * m[col][k];
            }
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let mut v = m[i][3];
        for j in i + 1..3 {
            v -= m[i][j] * x[j];
        }
        x[i] = v / m[i][i];
    }
    [x[0] / (s * s), x[1] / s, x[2]]
}

pub fn sum_squared_residual(points: &[(f64, f64)], c: [f64; 3]) -> f64 {
    points
        .iter()
        .map(|&(p, y)| {
            let r = c[0] * p * p + c[1] * p + c[2] - y;
            r * r
        })
        .sum()
}

/// Finite-difference KKT residual of a relaxed solution.
///
/// Works in the box coordinates `y ∈ [0,1]` and `z = (P − lo)/(hi − lo)`,
/// evaluates the Lagrangian from the problem data directly and
/// differentiates it by central differences with step `h = 1e-5`. The
/// result is the largest of the projected stationarity and complementarity
/// terms, each divided by `1 + |f|`, and the constraint violations divided by
/// `1 + |rhs|`.
pub fn fd_kkt_residual(prob: &RelaxedProblem, sol: &RelaxedSolution) -> f64 {
    let n = prob.units.len();
    let mut x = Vec::new();
    for (i, u) in prob.units.iter().enumerate() {
        x.push(sol.y[i]);
        x.push(unit_coordinate(u.p_lo, u.p_hi, sol.p[i]));
    }
    for (j, m) in prob.must_run.iter().enumerate() {
        x.push(unit_coordinate(m.p_lo, m.p_hi, sol.must_run_p[j]));
    }
    let mult = sol.multipliers;

    let parts = |x: &[f64]| -> (f64, [f64; 3]) {
        let mut f = 0.0;
        let mut supply = 0.0;
        let mut cap = prob.must_run_p_max;
        let mut floor = prob.must_run_p_min;
        for (i, u) in prob.units.iter().enumerate() {
            let y = x[2 * i];
            let p = u.p_lo + (u.p_hi - u.p_lo) * x[2 * i + 1];
            if u.has_output {
                f += y * u.cost.eval(p);
                supply += y * p;
            }
            f += u.switch_penalty * (y - u.anchor).powi(2) + u.score_cost * y;
            supply += (1.0 - y) * u.fallback_supply;
            cap += y * u.cap_max;
            floor += y * u.cap_min;
        }
        for (j, m) in prob.must_run.iter().enumerate() {
            let p = m.p_lo + (m.p_hi - m.p_lo) * x[2 * n + j];
            f += m.cost.eval(p);
            supply += p;
        }
        (
            f,
            [
                prob.demand - supply,
                prob.capacity_rhs - cap,
                floor - prob.floor_rhs,
            ],
        )
    };
    let lagrangian = |x: &[f64]| -> f64 {
        let (f, g) = parts(x);
        f + mult[0] * g[0] + mult[1] * g[1] + mult[2] * g[2]
    };

    let (f, g) = parts(&x);
    let denom = 1.0 + f.abs();
    let h = 1e-5;
    let mut r: f64 = 0.0;
    let mut probe = x.clone();
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = lagrangian(&probe);
        probe[k] = x[k] - h;
        let down = lagrangian(&probe);
        probe[k] = x[k];
        let d = (up - down) / (2.0 * h);
        let measure = if x[k] <= 1e-9 {
            (-d).max(0.0)
        } else if x[k] >= 1.0 - 1e-9 {
            d.max(0.0)
        } else {
            d.abs()
        };
        r = r.max(measure / denom);
    }
    let scale = [
        1.0 + prob.demand.abs(),
        1.0 + prob.capacity_rhs.abs(),
        1.0 + prob.floor_rhs.abs(),
    ];
    for k in 0..3 {
        r = r.max(g[k].max(0.0) / scale[k]);
        r = r.max((mult[k] * g[k]).abs() / denom);
        r = r.max((-mult[k]).max(0.0) / denom);
    }
    r
}

fn unit_coordinate(lo: f64, hi: f64, p: f64) -> f64 {
    if hi > lo {
        ((p - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

/// Constraint breaches found by scanning a decision log.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct LogAudit {
    pub min_runtime: usize,
    pub start_cap: usize,
    pub ramp_rate: usize,
    pub transition: usize,
    pub demand: usize,
}

impl LogAudit {
    pub fn total(&self) -> usize {
        self.min_runtime + self.start_cap + self.ramp_rate + self.transition + self.demand
    }
}

fn legal(from: Stage, to: Stage, ramp: bool, smooth: bool) -> bool {
    use Stage::*;
    if from == to {
        return true;
    }
    if !ramp {
        return matches!((from, to), (Off, On) | (On, Off));
    }
    match (from, to) {
        (Off, Prepare) => !smooth,
        (Prepare, RampUp) => !smooth,
        (Off, RampUp) => smooth,
        (RampUp, On) | (On, RampDown) | (RampDown, Off) => true,
        _ => false,
    }
}

/// Scans a decision log for min-runtime, 24 h start-cap, ramp-rate,
/// transition and demand breaches. Periods whose sweep reported unserved
/// demand are exempt from the demand check.
pub fn audit_log(
    decisions: &[PeriodDecision],
    specs: &[GeneratorSpec],
    dt: u32,
    ramp: bool,
    smooth: bool,
) -> LogAudit {
    let mut a = LogAudit::default();
    let n = specs.len();
    let day = (24 * 60 / dt) as usize;
    let mut prev_stage = vec![Stage::Off; n];
    let mut prev_out = vec![0.0f64; n];
    let mut on_run = vec![0usize; n];
    let mut starts: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, d) in decisions.iter().enumerate() {
        for i in 0..n {
            let (from, to) = (prev_stage[i], d.stages[i]);
            if !legal(from, to, ramp, smooth) {
                a.transition += 1;
            }
            if from == Stage::On && to != Stage::On && (on_run[i] * dt as usize) as f64 + 1e-9 < specs[i].min_runtime {
                a.min_runtime += 1;
            }
            if from == Stage::Off && to != Stage::Off {
                starts[i].push(t);
                let recent = starts[i].iter().filter(|&&s| s + day > t).count();
                if recent > specs[i].max_daily_starts as usize {
                    a.start_cap += 1;
                }
            }
            if ramp && to == Stage::On && matches!(from, Stage::On | Stage::RampUp) {
                let delta = d.outputs[i] - prev_out[i];
                let up = specs[i].ramp_up_rate * dt as f64;
                let down = specs[i].ramp_down_rate * dt as f64;
                if delta > up + 1e-6 || (from == Stage::On && -delta > down + 1e-6) {
                    a.ramp_rate += 1;
                }
            }
            on_run[i] = if to == Stage::On { on_run[i] + 1 } else { 0 };
            prev_stage[i] = to;
            prev_out[i] = d.outputs[i];
        }
        let supplied: f64 = d.outputs.iter().sum();
        let exempt = d.diagnostics.shortfall > 0.0 || d.diagnostics.emergency;
        if !exempt && supplied < d.demand * (1.0 - 1e-6) {
            a.demand += 1;
        }
    }
    a
}
