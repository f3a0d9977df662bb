//! Continuous relaxation of the per-period commitment problem.
//!
//! The binary commitment of every discretionary unit is replaced by a score
//! `y ∈ [0, 1]`. The relaxed problem
//!
//! ```text
//! min  Σ_m cost_j(P_j) + Σ_d [ h_i·y_i·cost_i(P_i) + K_i (y_i − ŷ_i)² + ℓ_i y_i ]
//! s.t. Σ_m P_j + Σ_d [ h_i y_i P_i + (1 − y_i) q_i ] ≥ demand
//!      C_max + Σ_d y_i P̄_i ≥ capacity_rhs
//!      C_min + Σ_d y_i P̲_i ≤ floor_rhs
//!      box bounds on y and P
//! ```
//!
//! covers both the runtime model (`h = 1`, `ŷ = u⁰`, `q = ℓ = 0`) and the ramp
//! model, where on-units score `1 − w` and off-units score `v`. It is solved
//! with a projected augmented-Lagrangian method: the three linear/bilinear
//! constraints are penalised with multiplier updates and each bound
//! constrained subproblem is minimised by a two-metric projected Newton
//! method. The Hessian is block diagonal (one 2×2 block per unit) plus a rank
//! ≤ 3 penalty term, so each Newton step costs O(n) via Woodbury.
//!
//! Outputs are optimised in normalised coordinates `z = (P − lo)/(hi − lo)`;
//! all stationarity measures below refer to those coordinates.

use serde::{Deserialize, Serialize};

use crate::fleet::{CostCurve, GeneratorSpec};

/// Variables closer than this to a bound count as sitting on it.
pub const BOUND_BAND: f64 = 1e-9;
/// Scores closer than this are ordered by the average-cost tie-break.
pub const SCORE_TIE: f64 = 1e-9;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxConfig {
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_outer: 500,
            max_inner: 2000,
        }
    }
}

/// A discretionary unit of the relaxed problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxedUnit {
    pub cost: CostCurve,
    pub p_lo: f64,
    pub p_hi: f64,
    /// Whether the unit produces `y·P` this period (false for ramp-model starts).
    pub has_output: bool,
    /// Score at which the switching penalty vanishes.
    pub anchor: f64,
    pub switch_penalty: f64,
    /// Linear cost on the score (the β efficiency term for starts).
    pub score_cost: f64,
    /// Supply delivered when the score is zero (first ramp-down period).
    pub fallback_supply: f64,
    pub cap_max: f64,
    pub cap_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MustRunUnit {
    pub cost: CostCurve,
    pub p_lo: f64,
    pub p_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedProblem {
    pub units: Vec<RelaxedUnit>,
    pub must_run: Vec<MustRunUnit>,
    pub demand: f64,
    pub capacity_rhs: f64,
    pub floor_rhs: f64,
    /// Σ p_max over the must-run set.
    pub must_run_p_max: f64,
    /// Σ p_min over the must-run set.
    pub must_run_p_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxStatus {
    Converged,
    NotConverged,
    Infeasible,
    /// No discretionary units; nothing to order.
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedSolution {
    pub y: Vec<f64>,
    /// Output of each discretionary unit, MW.
    pub p: Vec<f64>,
    pub must_run_p: Vec<f64>,
    /// Multipliers of (demand, capacity, floor) in $ per MW of violation.
    pub multipliers: [f64; 3],
    pub objective: f64,
    pub kkt_residual: f64,
    pub status: RelaxStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

impl RelaxedSolution {
    pub fn usable(&self) -> bool {
        self.status == RelaxStatus::Converged
    }
}

/// Layout of the normalised variable vector: one block per unit.
#[derive(Debug, Clone, Copy)]
enum Block {
    /// Discretionary unit: score at `y`, output at `z` when present.
    Unit { unit: usize, y: usize, z: Option<usize> },
    MustRun { unit: usize, z: usize },
}

struct Model<'a> {
    prob: &'a RelaxedProblem,
    blocks: Vec<Block>,
    n: usize,
    /// Constraint scales `1 + |rhs|`.
    scale: [f64; 3],
}

struct Eval {
    f: f64,
    g: [f64; 3],
}

impl<'a> Model<'a> {
    fn new(prob: &'a RelaxedProblem) -> Self {
        let mut blocks = Vec::with_capacity(prob.units.len() + prob.must_run.len());
        let mut n = 0;
        for (i, u) in prob.units.iter().enumerate() {
            let y = n;
            n += 1;
            let z = if u.has_output {
                n += 1;
                Some(n - 1)
            } else {
                None
            };
            blocks.push(Block::Unit { unit: i, y, z });
        }
        for j in 0..prob.must_run.len() {
            blocks.push(Block::MustRun { unit: j, z: n });
            n += 1;
        }
        let scale = [
            1.0 + prob.demand.abs(),
            1.0 + prob.capacity_rhs.abs(),
            1.0 + prob.floor_rhs.abs(),
        ];
        Self {
            prob,
            blocks,
            n,
            scale,
        }
    }

    fn output(lo: f64, hi: f64, z: f64) -> f64 {
        lo + (hi - lo) * z
    }

    /// Objective and scaled constraints `ĝ ≤ 0`.
    fn eval(&self, x: &[f64]) -> Eval {
        let p = self.prob;
        let mut f = 0.0;
        let mut supply = 0.0;
        let mut cap = p.must_run_p_max;
        let mut floor = p.must_run_p_min;
        for b in &self.blocks {
            match *b {
                Block::Unit { unit, y, z } => {
                    let u = &p.units[unit];
                    let yv = x[y];
                    if let Some(z) = z {
                        let pv = Self::output(u.p_lo, u.p_hi, x[z]);
                        f += yv * u.cost.eval(pv);
                        supply += yv * pv;
                    }
                    let dy = yv - u.anchor;
                    f += u.switch_penalty * dy * dy + u.score_cost * yv;
                    supply += (1.0 - yv) * u.fallback_supply;
                    cap += yv * u.cap_max;
                    floor += yv * u.cap_min;
                }
                Block::MustRun { unit, z } => {
                    let m = &p.must_run[unit];
                    let pv = Self::output(m.p_lo, m.p_hi, x[z]);
                    f += m.cost.eval(pv);
                    supply += pv;
                }
            }
        }
        Eval {
            f,
            g: [
                (p.demand - supply) / self.scale[0],
                (p.capacity_rhs - cap) / self.scale[1],
                (floor - p.floor_rhs) / self.scale[2],
            ],
        }
    }

    /// Gradient of `f + Σ π_k ĝ_k`.
    fn lagrangian_grad(&self, x: &[f64], pi: &[f64; 3], grad: &mut [f64]) {
        let p = self.prob;
        let w0 = pi[0] / self.scale[0];
        let w1 = pi[1] / self.scale[1];
        let w2 = pi[2] / self.scale[2];
        for b in &self.blocks {
            match *b {
                Block::Unit { unit, y, z } => {
                    let u = &p.units[unit];
                    let yv = x[y];
                    let mut gy = 2.0 * u.switch_penalty * (yv - u.anchor) + u.score_cost;
                    gy += w0 * u.fallback_supply - w1 * u.cap_max + w2 * u.cap_min;
                    if let Some(z) = z {
                        let width = u.p_hi - u.p_lo;
                        let pv = Self::output(u.p_lo, u.p_hi, x[z]);
                        gy += u.cost.eval(pv) - w0 * pv;
                        grad[z] = yv * width * (u.cost.marginal(pv) - w0);
                    }
                    grad[y] = gy;
                }
                Block::MustRun { unit, z } => {
                    let m = &p.must_run[unit];
                    let width = m.p_hi - m.p_lo;
                    let pv = Self::output(m.p_lo, m.p_hi, x[z]);
                    grad[z] = width * (m.cost.marginal(pv) - w0);
                }
            }
        }
    }

    /// Gradients of the three scaled constraints (dense).
    fn constraint_grads(&self, x: &[f64], out: &mut [Vec<f64>; 3]) {
        let p = self.prob;
        for g in out.iter_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for b in &self.blocks {
            match *b {
                Block::Unit { unit, y, z } => {
                    let u = &p.units[unit];
                    let mut d0 = u.fallback_supply;
                    if let Some(z) = z {
                        let width = u.p_hi - u.p_lo;
                        let pv = Self::output(u.p_lo, u.p_hi, x[z]);
                        d0 -= pv;
                        out[0][z] = -x[y] * width / self.scale[0];
                    }
                    out[0][y] = d0 / self.scale[0];
                    out[1][y] = -u.cap_max / self.scale[1];
                    out[2][y] = u.cap_min / self.scale[2];
                }
                Block::MustRun { unit, z } => {
                    let m = &p.must_run[unit];
                    out[0][z] = -(m.p_hi - m.p_lo) / self.scale[0];
                }
            }
        }
    }
}

/// Augmented Lagrangian value `f + Σ ψ(ĝ_k; μ_k, ρ)`.
fn merit(e: &Eval, mu: &[f64; 3], rho: f64) -> f64 {
    let mut v = e.f;
    for k in 0..3 {
        let t = (mu[k] + rho * e.g[k]).max(0.0);
        v += (t * t - mu[k] * mu[k]) / (2.0 * rho);
    }
    v
}

fn shifted_multipliers(e: &Eval, mu: &[f64; 3], rho: f64) -> [f64; 3] {
    [
        (mu[0] + rho * e.g[0]).max(0.0),
        (mu[1] + rho * e.g[1]).max(0.0),
        (mu[2] + rho * e.g[2]).max(0.0),
    ]
}

/// Bound-aware stationarity measure of one coordinate.
#[inline]
fn coordinate_measure(x: f64, g: f64) -> f64 {
    if x <= BOUND_BAND {
        (-g).max(0.0)
    } else if x >= 1.0 - BOUND_BAND {
        g.max(0.0)
    } else {
        g.abs()
    }
}

fn stationarity(x: &[f64], grad: &[f64]) -> f64 {
    x.iter()
        .zip(grad)
        .map(|(&x, &g)| coordinate_measure(x, g))
        .fold(0.0, f64::max)
}

/// Symmetric 2×2 (or 1×1) block with eigenvalues floored away from zero.
#[derive(Debug, Clone, Copy)]
struct InvBlock {
    /// Inverse entries [[a, b], [b, c]]; for 1×1 blocks only `a` is used.
    a: f64,
    b: f64,
    c: f64,
}

fn invert_modified_2x2(p: f64, r: f64, s: f64, floor: f64) -> InvBlock {
    let mean = 0.5 * (p + s);
    let half = 0.5 * (p - s);
    let rad = (half * half + r * r).sqrt();
    let l1 = mean + rad;
    let l2 = mean - rad;
    // eigenvector of l1
    let (v1x, v1y) = if rad == 0.0 {
        (1.0, 0.0)
    } else if half >= 0.0 {
        let nx = half + rad;
        let n = (nx * nx + r * r).sqrt();
        (nx / n, r / n)
    } else {
        let ny = rad - half;
        let n = (ny * ny + r * r).sqrt();
        (r / n, ny / n)
    };
    let (v2x, v2y) = (-v1y, v1x);
    let m1 = 1.0 / l1.abs().max(floor);
    let m2 = 1.0 / l2.abs().max(floor);
    InvBlock {
        a: m1 * v1x * v1x + m2 * v2x * v2x,
        b: m1 * v1x * v1y + m2 * v2x * v2y,
        c: m1 * v1y * v1y + m2 * v2y * v2y,
    }
}

struct Solver<'a, 'b> {
    model: &'b Model<'a>,
    rho: f64,
    mu: [f64; 3],
    grad: Vec<f64>,
    cgrad: [Vec<f64>; 3],
    dir: Vec<f64>,
    trial: Vec<f64>,
    inner_iterations: usize,
}

impl<'a, 'b> Solver<'a, 'b> {
    fn new(model: &'b Model<'a>, rho: f64) -> Self {
        let n = model.n;
        Self {
            model,
            rho,
            mu: [0.0; 3],
            grad: vec![0.0; n],
            cgrad: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            dir: vec![0.0; n],
            trial: vec![0.0; n],
            inner_iterations: 0,
        }
    }

    /// Gradient of the augmented Lagrangian at `x`, returns the evaluation.
    fn gradient(&mut self, x: &[f64]) -> (Eval, [f64; 3]) {
        let e = self.model.eval(x);
        let pi = shifted_multipliers(&e, &self.mu, self.rho);
        self.model.lagrangian_grad(x, &pi, &mut self.grad);
        (e, pi)
    }

    /// Minimises the augmented Lagrangian over the box until the stationarity
    /// measure drops below `omega`. Returns false when the iteration cap hits.
    fn minimize(&mut self, x: &mut [f64], omega: f64, max_iter: usize) -> bool {
        let model = self.model;
        let prob = model.prob;
        let n = model.n;
        for _ in 0..max_iter {
            let (e, pi) = self.gradient(x);
            let phi = merit(&e, &self.mu, self.rho);
            if stationarity(x, &self.grad) <= omega {
                return true;
            }
            self.inner_iterations += 1;
            model.constraint_grads(x, &mut self.cgrad);

            // Block Hessian of f + Σ π ĝ, with diagonal of the full Hessian for scaling.
            let w0 = pi[0] / model.scale[0];
            let mut hdiag = vec![0.0; n];
            let mut hoff = vec![0.0; n]; // coupling stored at the y index
            for b in &model.blocks {
                match *b {
                    Block::Unit { unit, y, z } => {
                        let u = &prob.units[unit];
                        hdiag[y] = 2.0 * u.switch_penalty;
                        if let Some(z) = z {
                            let width = u.p_hi - u.p_lo;
                            let pv = Model::output(u.p_lo, u.p_hi, x[z]);
                            hdiag[z] = 2.0 * u.cost.a * x[y] * width * width;
                            hoff[y] = width * (u.cost.marginal(pv) - w0);
                        }
                    }
                    Block::MustRun { unit, z } => {
                        let m = &prob.must_run[unit];
                        let width = m.p_hi - m.p_lo;
                        hdiag[z] = 2.0 * m.cost.a * width * width;
                    }
                }
            }
            let active_k: Vec<usize> = (0..3).filter(|&k| pi[k] > 0.0).collect();
            let mut full_diag = hdiag.clone();
            for &k in &active_k {
                for j in 0..n {
                    full_diag[j] += self.rho * self.cgrad[k][j] * self.cgrad[k][j];
                }
            }
            let scale_ref = full_diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let floor = 1e-10 * scale_ref.max(1e-12) + 1e-12;

            // ε-active set from the diagonally scaled projected step.
            let mut eps = 0.0f64;
            for j in 0..n {
                let d = full_diag[j].abs().max(floor);
                let step = (x[j] - self.grad[j] / d).clamp(0.0, 1.0);
                eps = eps.max((x[j] - step).abs());
            }
            let eps = eps.min(1e-3);
            let active: Vec<bool> = (0..n)
                .map(|j| {
                    (x[j] <= eps && self.grad[j] > 0.0) || (x[j] >= 1.0 - eps && self.grad[j] < 0.0)
                })
                .collect();

            // Inverse of the modified block-diagonal part on the free set.
            let mut inv: Vec<Option<(usize, Option<usize>, InvBlock)>> = Vec::with_capacity(model.blocks.len());
            for b in &model.blocks {
                let (i0, i1) = match *b {
                    Block::Unit { y, z, .. } => (y, z),
                    Block::MustRun { z, .. } => (z, None),
                };
                let f0 = !active[i0];
                let f1 = i1.map(|i| !active[i]).unwrap_or(false);
                let entry = match (f0, f1) {
                    (true, true) => {
                        let i1 = i1.unwrap();
                        Some((i0, Some(i1), invert_modified_2x2(hdiag[i0], hoff[i0], hdiag[i1], floor)))
                    }
                    (true, false) => Some((i0, None, InvBlock { a: 1.0 / hdiag[i0].abs().max(floor), b: 0.0, c: 0.0 })),
                    (false, true) => {
                        let i1 = i1.unwrap();
                        Some((i1, None, InvBlock { a: 1.0 / hdiag[i1].abs().max(floor), b: 0.0, c: 0.0 }))
                    }
                    (false, false) => None,
                };
                inv.push(entry);
            }
            let apply_inv = |v: &[f64], out: &mut [f64]| {
                out.iter_mut().for_each(|o| *o = 0.0);
                for e in inv.iter().flatten() {
                    match *e {
                        (i0, Some(i1), blk) => {
                            out[i0] = blk.a * v[i0] + blk.b * v[i1];
                            out[i1] = blk.b * v[i0] + blk.c * v[i1];
                        }
                        (i0, None, blk) => out[i0] = blk.a * v[i0],
                    }
                }
            };

            // Woodbury: (B + C Cᵀ)⁻¹ g with C = √ρ ∇ĝ_k restricted to free vars.
            let masked = |v: &[f64]| -> Vec<f64> {
                v.iter().zip(&active).map(|(&a, &act)| if act { 0.0 } else { a }).collect()
            };
            let g_free = masked(&self.grad);
            let mut binv_g = vec![0.0; n];
            apply_inv(&g_free, &mut binv_g);
            let r = active_k.len();
            let sr = self.rho.sqrt();
            let cols: Vec<Vec<f64>> = active_k
                .iter()
                .map(|&k| masked(&self.cgrad[k]).into_iter().map(|v| v * sr).collect())
                .collect();
            let mut binv_c: Vec<Vec<f64>> = Vec::with_capacity(r);
            for c in &cols {
                let mut out = vec![0.0; n];
                apply_inv(c, &mut out);
                binv_c.push(out);
            }
            let mut newton = binv_g.clone();
            if r > 0 {
                let mut m = [[0.0f64; 3]; 3];
                let mut rhs = [0.0f64; 3];
                for a in 0..r {
                    for bb in 0..r {
                        m[a][bb] = dot(&cols[a], &binv_c[bb]) + if a == bb { 1.0 } else { 0.0 };
                    }
                    rhs[a] = dot(&cols[a], &binv_g);
                }
                let sol = solve_small(&mut m, &mut rhs, r);
                for a in 0..r {
                    for j in 0..n {
                        newton[j] -= binv_c[a][j] * sol[a];
                    }
                }
            }
            for j in 0..n {
                self.dir[j] = if active[j] {
                    -self.grad[j] / full_diag[j].abs().max(floor)
                } else {
                    -newton[j]
                };
            }

            // Armijo search along the projection arc.
            let free_slope: f64 = (0..n).filter(|&j| !active[j]).map(|j| self.grad[j] * self.dir[j]).sum();
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                for j in 0..n {
                    self.trial[j] = (x[j] + alpha * self.dir[j]).clamp(0.0, 1.0);
                }
                let te = model.eval(&self.trial);
                let tphi = merit(&te, &self.mu, self.rho);
                let mut predicted = -alpha * free_slope;
                for j in 0..n {
                    if active[j] {
                        predicted += self.grad[j] * (x[j] - self.trial[j]);
                    }
                }
                if phi - tphi >= ARMIJO * predicted && tphi <= phi {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                // Newton direction failed; fall back to a scaled projected gradient step.
                let mut alpha = 1.0;
                for _ in 0..MAX_BACKTRACKS {
                    for j in 0..n {
                        let d = -self.grad[j] / full_diag[j].abs().max(floor);
                        self.trial[j] = (x[j] + alpha * d).clamp(0.0, 1.0);
                    }
                    let te = model.eval(&self.trial);
                    let tphi = merit(&te, &self.mu, self.rho);
                    let decrease: f64 = (0..n).map(|j| self.grad[j] * (x[j] - self.trial[j])).sum();
                    if phi - tphi >= ARMIJO * decrease && tphi < phi {
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
            }
            if !accepted {
                return false;
            }
            x.copy_from_slice(&self.trial);
        }
        false
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting on the leading `r×r` block.
fn solve_small(m: &mut [[f64; 3]; 3], rhs: &mut [f64; 3], r: usize) -> [f64; 3] {
    for col in 0..r {
        let piv = (col..r)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..r {
            let f = m[row][col] / m[col][col];
            for c in col..r {
                m[row][c] -= f * m[col][c];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..r).rev() {
        let mut s = rhs[row];
        for c in row + 1..r {
            s -= m[row][c] * x[c];
        }
        x[row] = s / m[row][row];
    }
    x
}

/// Quick necessary-condition check: can any point of the box meet each constraint?
fn obviously_infeasible(p: &RelaxedProblem) -> bool {
    let best_supply: f64 = p.must_run.iter().map(|m| m.p_hi).sum::<f64>()
        + p.units
            .iter()
            .map(|u| {
                let on = if u.has_output { u.p_hi } else { 0.0 };
                on.max(u.fallback_supply)
            })
            .sum::<f64>();
    let best_cap = p.must_run_p_max + p.units.iter().map(|u| u.cap_max).sum::<f64>();
    let tol = |v: f64| 1e-9 * (1.0 + v.abs());
    best_supply < p.demand - tol(p.demand)
        || best_cap < p.capacity_rhs - tol(p.capacity_rhs)
        || p.must_run_p_min > p.floor_rhs + tol(p.floor_rhs)
        || p.must_run_p_max + capacity_within_floor(p) < p.capacity_rhs - tol(p.capacity_rhs)
}

/// Largest `Σ y·cap_max` over `y ∈ [0, 1]` with `Σ y·cap_min` inside the
/// floor budget (fractional knapsack, exact).
fn capacity_within_floor(p: &RelaxedProblem) -> f64 {
    let mut budget = (p.floor_rhs - p.must_run_p_min).max(0.0);
    let mut units: Vec<&RelaxedUnit> = p.units.iter().collect();
    units.sort_by(|a, b| (a.cap_min * b.cap_max).total_cmp(&(b.cap_min * a.cap_max)));
    let mut cap = 0.0;
    for u in units {
        let y = if u.cap_min <= budget { 1.0 } else { budget / u.cap_min };
        cap += y * u.cap_max;
        budget -= y * u.cap_min;
        if y < 1.0 {
            break;
        }
    }
    cap
}

/// KKT residual of `(x, π)` in the normalised coordinates:
/// max of stationarity/(1+|f|), scaled violation, and |π_k ĝ_k|/(1+|f|).
fn residual(model: &Model, x: &[f64], pi: &[f64; 3], grad: &mut [f64]) -> (f64, f64) {
    let e = model.eval(x);
    model.lagrangian_grad(x, pi, grad);
    let denom = 1.0 + e.f.abs();
    let mut r = stationarity(x, grad) / denom;
    for k in 0..3 {
        r = r.max(e.g[k].max(0.0));
        r = r.max((pi[k] * e.g[k]).abs() / denom);
    }
    (r, e.f)
}

fn unpack(model: &Model, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = model.prob;
    let mut y = vec![0.0; p.units.len()];
    let mut out = vec![0.0; p.units.len()];
    let mut must = vec![0.0; p.must_run.len()];
    for b in &model.blocks {
        match *b {
            Block::Unit { unit, y: iy, z } => {
                let u = &p.units[unit];
                y[unit] = x[iy];
                out[unit] = match z {
                    Some(z) => Model::output(u.p_lo, u.p_hi, x[z]),
                    None => u.p_lo,
                };
            }
            Block::MustRun { unit, z } => {
                let m = &p.must_run[unit];
                must[unit] = Model::output(m.p_lo, m.p_hi, x[z]);
            }
        }
    }
    (y, out, must)
}

/// Solves the relaxed problem from the fixed start `y = 0.5`, `P` mid-range.
pub fn solve_relaxed(problem: &RelaxedProblem, config: &RelaxConfig) -> RelaxedSolution {
    let model = Model::new(problem);
    let mut x = vec![0.5; model.n];

    let finish = |x: &[f64], pi: [f64; 3], status, outer, inner, kkt: f64, f: f64| {
        let (y, p, must_run_p) = unpack(&model, x);
        RelaxedSolution {
            y,
            p,
            must_run_p,
            multipliers: [
                pi[0] / model.scale[0],
                pi[1] / model.scale[1],
                pi[2] / model.scale[2],
            ],
            objective: f,
            kkt_residual: kkt,
            status,
            outer_iterations: outer,
            inner_iterations: inner,
        }
    };

    if problem.units.is_empty() {
        let f = model.eval(&x).f;
        return finish(&x, [0.0; 3], RelaxStatus::Trivial, 0, 0, f64::NAN, f);
    }
    if obviously_infeasible(problem) {
        let f = model.eval(&x).f;
        return finish(&x, [0.0; 3], RelaxStatus::Infeasible, 0, 0, f64::INFINITY, f);
    }

    let f0 = model.eval(&x).f;
    let mut solver = Solver::new(&model, 10.0 * (1.0 + f0.abs()));
    let rho_max = 1e12 * (1.0 + f0.abs());
    let mut omega = 1e-2 * (1.0 + f0.abs());
    let mut prev_violation = f64::INFINITY;
    let mut grad = vec![0.0; model.n];
    let mut last = (f64::INFINITY, f0, [0.0; 3]);

    for outer in 0..config.max_outer {
        let inner_ok = solver.minimize(&mut x, omega, config.max_inner);
        let e = model.eval(&x);
        let pi = shifted_multipliers(&e, &solver.mu, solver.rho);
        let violation = (0..3)
            .map(|k| (-e.g[k]).min(solver.mu[k] / solver.rho).abs())
            .fold(0.0, f64::max);
        let (kkt, f) = residual(&model, &x, &pi, &mut grad);
        last = (kkt, f, pi);
        if kkt <= config.tol {
            return finish(
                &x,
                pi,
                RelaxStatus::Converged,
                outer + 1,
                solver.inner_iterations,
                kkt,
                f,
            );
        }
        solver.mu = pi;
        if violation > 0.25 * prev_violation || !inner_ok {
            solver.rho = (solver.rho * 10.0).min(rho_max);
        }
        prev_violation = violation;
        let target = 0.5 * config.tol * (1.0 + f.abs());
        omega = (omega * 0.1).max(target);
    }
    log::debug!(
        "relaxation did not converge: kkt residual {:.3e} after {} outer iterations",
        last.0,
        config.max_outer
    );
    let (kkt, f, pi) = last;
    finish(
        &x,
        pi,
        RelaxStatus::NotConverged,
        config.max_outer,
        solver.inner_iterations,
        kkt,
        f,
    )
}

/// Orders discretionary units for the rounding sweep.
///
/// Descending score; scores within [`SCORE_TIE`] of their neighbour form a
/// tie group ordered by ascending average cost at `p_typ`, then by id. With
/// `fallback` the scores are ignored and the result is the priority list.
pub fn order_candidates(y: &[f64], specs: &[&GeneratorSpec], fallback: bool) -> Vec<usize> {
    let key = |i: usize| (specs[i].average_cost_at_typical(), specs[i].id.as_str());
    let by_cost = |a: &usize, b: &usize| {
        let (ca, ia) = key(*a);
        let (cb, ib) = key(*b);
        ca.total_cmp(&cb).then_with(|| ia.cmp(ib))
    };
    let mut order: Vec<usize> = (0..specs.len()).collect();
    if fallback {
        order.sort_by(by_cost);
        return order;
    }
    assert_eq!(y.len(), specs.len(), "one score per unit");
    order.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then_with(|| by_cost(&a, &b)));
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && (y[order[end - 1]] - y[order[end]]).abs() < SCORE_TIE {
            end += 1;
        }
        order[start..end].sort_by(by_cost);
        start = end;
    }
    order
}
