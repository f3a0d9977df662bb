//! Exhaustive single-period commitment by subset enumeration.
//!
//! Used as ground truth for the relax-and-round heuristic on desk-sized
//! instances. Only the runtime-model problem is covered.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispatch::{economic_dispatch, DispatchProblem, DispatchUnit};
use crate::error::{Error, Result};
use crate::fleet::{reconstructed_base_fleet, CostCurve, GeneratorSpec};
use crate::relaxation::RelaxConfig;
use crate::rounding::{RangeTargets, SweepConfig};
use crate::runtime::{
    solve_runtime_period, startup_penalty, Candidate, GeneratorState, RuntimeOutcome, Stage, StartThresholds,
};

/// Largest discretionary set `exhaustive_uc` accepts.
pub const MAX_ORACLE_UNITS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleUnit {
    pub spec: GeneratorSpec,
    pub cost: CostCurve,
    pub was_on: bool,
    /// Charged when the unit is committed while `was_on` is false.
    pub penalty: f64,
}

impl OracleUnit {
    pub fn new(spec: GeneratorSpec, was_on: bool, penalty: f64) -> Self {
        Self {
            cost: spec.cost,
            spec,
            was_on,
            penalty,
        }
    }

    fn candidate(&self) -> Candidate<'_> {
        Candidate {
            spec: &self.spec,
            cost: self.cost,
            was_on: self.was_on,
            penalty: self.penalty,
        }
    }
}

/// A single-period commitment problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UcInstance {
    pub must_run: Vec<OracleUnit>,
    pub discretionary: Vec<OracleUnit>,
    pub demand: f64,
    /// Capacity target excluding the reserve, and the output floor.
    pub targets: RangeTargets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Sorted discretionary indices of the best subset; `None` if no subset is feasible.
    pub best_commitment: Option<Vec<usize>>,
    pub best_objective: f64,
    pub evaluated: u64,
    pub feasible: u64,
}

impl OracleResult {
    pub fn gap_vs(&self, candidate_objective: f64) -> Result<f64> {
        gap(candidate_objective, self)
    }
}

fn members(mask: u64, n: usize) -> Vec<usize> {
    (0..n).filter(|&i| mask >> i & 1 == 1).collect()
}

impl UcInstance {
    /// Objective of committing `subset` (discretionary indices) or `None`
    /// when the subset violates the capacity, floor or balance constraints.
    pub fn subset_objective(&self, subset: &[usize]) -> Result<Option<f64>> {
        let chosen = || subset.iter().map(|&i| &self.discretionary[i]).chain(&self.must_run);
        let p_max: f64 = chosen().map(|u| u.spec.p_max).sum();
        let p_min: f64 = chosen().map(|u| u.spec.p_min).sum();
        let reserve = chosen().map(|u| u.spec.p_max).fold(0.0, f64::max);
        if p_max < self.targets.capacity + reserve || p_min > self.targets.floor {
            return Ok(None);
        }
        if self.demand < p_min || self.demand > p_max {
            return Ok(None);
        }
        let charged = subset.iter().map(|&i| {
            let u = &self.discretionary[i];
            (u, if u.was_on { 0.0 } else { u.penalty })
        });
        let units = charged
            .chain(self.must_run.iter().map(|u| (u, 0.0)))
            .map(|(u, k)| DispatchUnit::new(u.cost, u.spec.p_min, u.spec.p_max, k))
            .collect();
        let d = economic_dispatch(&DispatchProblem {
            units,
            demand: self.demand,
        })?;
        Ok(d.feasible.then_some(d.objective))
    }
}

fn better(a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
}

/// Enumerates every discretionary subset and returns the cheapest feasible one.
///
/// Ties are broken toward the lexicographically smallest index list, so the
/// result does not depend on evaluation order.
pub fn exhaustive_uc(instance: &UcInstance) -> Result<OracleResult> {
    let n = instance.discretionary.len();
    if n > MAX_ORACLE_UNITS {
        return Err(Error::CapExceeded(n, MAX_ORACLE_UNITS));
    }
    let total = 1u64 << n;
    let found = (0..total)
        .into_par_iter()
        .map(|mask| {
            let subset = members(mask, n);
            Ok(instance.subset_objective(&subset)?.map(|obj| (obj, subset)))
        })
        .collect::<Result<Vec<_>>>()?;
    let feasible = found.iter().filter(|f| f.is_some()).count() as u64;
    let best = found.into_iter().flatten().min_by(better);
    Ok(OracleResult {
        best_objective: best.as_ref().map_or(f64::INFINITY, |b| b.0),
        best_commitment: best.map(|b| b.1),
        evaluated: total,
        feasible,
    })
}

/// Relative excess `(candidate − best)/best`.
pub fn gap(candidate_objective: f64, oracle: &OracleResult) -> Result<f64> {
    let best = oracle.best_objective;
    if !(best.is_finite() && best > 0.0) {
        return Err(Error::UndefinedGap(best));
    }
    Ok((candidate_objective - best) / best)
}

/// Relax-and-round on the same instance.
pub fn rruc_single_period(instance: &UcInstance, relax: &RelaxConfig, sweep: &SweepConfig) -> Result<RuntimeOutcome> {
    let must: Vec<Candidate> = instance.must_run.iter().map(OracleUnit::candidate).collect();
    let disc: Vec<Candidate> = instance.discretionary.iter().map(OracleUnit::candidate).collect();
    solve_runtime_period(&must, &disc, instance.demand, instance.targets, relax, sweep)
}

/// Random instance drawn from the reconstructed base fleet.
///
/// Units are sampled without replacement. Demand lies between 30% and 55%
/// of the installed capacity, with forecast targets drawn around it. The
/// previous commitment is the cheapest feasible one for the previous hour,
/// whose demand and targets differ by a factor in `[0.9, 1.1]`, found by
/// enumeration without start charges. Units off in the previous hour have
/// been off between 1 and 72 hours.
pub fn random_instance(n_discretionary: usize, n_must_run: usize, seed: u64) -> Result<UcInstance> {
    let base = reconstructed_base_fleet();
    let pool = &base.generators;
    let n = n_discretionary + n_must_run;
    if n > pool.len() {
        return Err(Error::InvalidArgument(format!("{n} units requested from a pool of {}", pool.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, pool.len(), n).into_vec();
    let mut units: Vec<OracleUnit> = picks.iter().map(|&i| OracleUnit::new(pool[i].clone(), true, 0.0)).collect();
    let discretionary = units.split_off(n_must_run);
    let must_run = units;

    let installed: f64 = discretionary.iter().chain(&must_run).map(|u| u.spec.p_max).sum();
    let demand = installed * rng.gen_range(0.30..0.55);
    let sigma = 0.02 * demand;
    let d_max = demand * rng.gen_range(1.0..1.15);
    let d_min = demand * rng.gen_range(0.75..1.0);
    let mut inst = UcInstance {
        must_run,
        discretionary,
        demand,
        targets: RangeTargets {
            capacity: d_max + 3.0 * sigma,
            floor: d_min - sigma,
        },
    };

    let step: f64 = rng.gen_range(0.9..1.1);
    let mut previous = inst.clone();
    previous.demand *= step;
    previous.targets.capacity *= step;
    previous.targets.floor *= step;
    let was_on = exhaustive_uc(&previous)?.best_commitment.unwrap_or_default();

    let thresholds = StartThresholds::default();
    for (k, u) in inst.discretionary.iter_mut().enumerate() {
        let mut state = GeneratorState::off(rng.gen_range(60.0..72.0 * 60.0));
        u.was_on = was_on.contains(&k);
        if u.was_on {
            state.stage = Stage::On;
        }
        u.penalty = startup_penalty(&u.spec, &state, &thresholds);
    }
    Ok(inst)
}

/// Gaps of relax-and-round against the oracle over a seeded suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub seeds: Vec<u64>,
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub median_gap: f64,
    /// Instances where the heuristic range was flagged.
    pub flagged: usize,
}

/// Runs `instances` random instances; seeds whose oracle has no feasible
/// subset are skipped and replaced by the next seed.
pub fn compare_suite(
    units: usize,
    instances: usize,
    seed: u64,
    relax: &RelaxConfig,
    sweep: &SweepConfig,
) -> Result<OracleComparison> {
    let mut seeds = Vec::with_capacity(instances);
    let mut gaps = Vec::with_capacity(instances);
    let mut flagged = 0;
    let mut s = seed;
    while gaps.len() < instances {
        let inst = random_instance(units, 0, s)?;
        let best = exhaustive_uc(&inst)?;
        if best.best_commitment.is_some() {
            let out = rruc_single_period(&inst, relax, sweep)?;
            let diag = out.diagnostics;
            if diag.capacity_short || diag.floor_violated || diag.emergency {
                flagged += 1;
            }
            gaps.push(gap(out.objective, &best)?);
            seeds.push(s);
        }
        s += 1;
        if s - seed > 100 * instances as u64 + 100 {
            return Err(Error::InvalidArgument("could not draw feasible instances".into()));
        }
    }
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median_gap = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Ok(OracleComparison {
        seeds,
        max_gap: sorted.last().copied().unwrap_or(0.0),
        median_gap,
        gaps,
        flagged,
    })
}
