//! Randomised invariants.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rruc::bench::fit_power_law;
use rruc::demand::{forecast_stats, synthesize_demand, window_len, DemandTrace};
use rruc::dispatch::{economic_dispatch, verify_kkt_dispatch, DispatchProblem};
use rruc::fleet::{reconstructed_base_fleet, synthesize_fleet};
use rruc::oracle::{exhaustive_uc, random_instance, rruc_single_period};
use rruc::relaxation::{order_candidates, solve_relaxed, RelaxConfig};
use rruc::rounding::SweepConfig;
use rruc::sim::{run_simulation, Model, SimConfig};

fn dispatch_instance(seed: u64) -> DispatchProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=12);
    let units: Vec<_> = (0..n).map(|_| common::random_dispatch_unit(&mut rng)).collect();
    let lo: f64 = units.iter().map(|u| u.lower).sum();
    let hi: f64 = units.iter().map(|u| u.upper).sum();
    let demand = lo + rng.gen_range(0.0..1.0) * (hi - lo);
    DispatchProblem { units, demand }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthesized_copies_stay_valid_and_within_ten_percent(seed in any::<u64>(), multiplier in 2u32..=5) {
        let base = reconstructed_base_fleet();
        let fleet = synthesize_fleet(&base, multiplier, seed).unwrap();
        prop_assert_eq!(fleet.len(), base.len() * multiplier as usize);
        for (k, g) in fleet.generators.iter().enumerate() {
            g.validate().unwrap();
            let b = &base.generators[k % base.len()];
            let r_max = g.p_max / b.p_max;
            let r_min = g.p_min / b.p_min;
            prop_assert!((0.9..=1.1).contains(&r_max), "p_max ratio {}", r_max);
            prop_assert!((0.9..=1.1).contains(&r_min), "p_min ratio {}", r_min);
            prop_assert!((g.p_typ - (4.0 * g.p_max + g.p_min) / 5.0).abs() == 0.0);
        }
        let total: f64 = fleet.generators.iter().map(|g| g.p_max).sum();
        prop_assert!((fleet.total_p_max - total).abs() <= 1e-9 * total);
    }

    #[test]
    fn forecast_window_equals_brute_force_scan(
        values in prop::collection::vec(1.0f64..1e5, 1..200),
        dt in prop::sample::select(vec![5u32, 15, 60]),
        pick in any::<prop::sample::Index>(),
        sigma in 0.0f64..100.0,
    ) {
        let trace = DemandTrace::new(dt, values.clone(), 0.0).unwrap();
        let t = pick.index(values.len());
        let fw = forecast_stats(&trace, t, sigma, 2.0).unwrap();
        let slice = &values[t..(t + 72 * 60 / dt as usize).min(values.len())];
        let lo = slice.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(fw.d_min_72, lo);
        prop_assert_eq!(fw.d_max_72, hi);
        prop_assert_eq!(fw.sigma_d, sigma * 2.0);
        prop_assert!(fw.d_min_72 <= fw.d_now && fw.d_now <= fw.d_max_72);
        let last = forecast_stats(&trace, values.len() - 1, sigma, 1.0).unwrap();
        prop_assert_eq!(last.d_min_72, values[values.len() - 1]);
        prop_assert_eq!(last.d_max_72, values[values.len() - 1]);
        prop_assert_eq!(window_len(dt), 72 * 60 / dt as usize);
    }

    #[test]
    fn dispatch_beats_sampled_feasible_points(seed in any::<u64>()) {
        let problem = dispatch_instance(seed);
        let d = economic_dispatch(&problem).unwrap();
        prop_assert!(d.feasible);
        prop_assert!(verify_kkt_dispatch(&problem, &d, 1e-6));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..1000 {
            let mut p: Vec<f64> = problem.units.iter().map(|u| rng.gen_range(u.lower..=u.upper)).collect();
            let deficit = problem.demand - p.iter().sum::<f64>();
            if deficit > 0.0 {
                let room: f64 = problem.units.iter().zip(&p).map(|(u, x)| u.upper - x).sum();
                for (x, u) in p.iter_mut().zip(&problem.units) {
                    *x += deficit * (u.upper - *x) / room;
                }
            }
            let obj: f64 = problem.units.iter().zip(&p).map(|(u, &x)| u.cost.eval(x) + u.start_penalty).sum();
            prop_assert!(d.objective <= obj + 1e-9 * obj.abs(), "{} > {}", d.objective, obj);
        }
    }

    #[test]
    fn supply_is_nondecreasing_in_price(seed in any::<u64>(), l1 in -50.0f64..150.0, step in 0.0f64..50.0) {
        let problem = dispatch_instance(seed);
        let at = |l: f64| -> f64 { problem.units.iter().map(|u| u.supply(l)).sum() };
        prop_assert!(at(l1) <= at(l1 + step));
    }

    #[test]
    fn dispatch_is_deterministic(seed in any::<u64>()) {
        let problem = dispatch_instance(seed);
        prop_assert_eq!(economic_dispatch(&problem).unwrap(), economic_dispatch(&problem).unwrap());
    }

    #[test]
    fn ordering_ignores_uniform_rescaling(
        levels in prop::collection::vec(0u32..20, 2..30),
        scale in 0.1f64..10.0,
    ) {
        let base = reconstructed_base_fleet();
        let specs: Vec<_> = base.generators.iter().take(levels.len()).collect();
        let y: Vec<f64> = levels.iter().map(|&l| l as f64 / 20.0).collect();
        let scaled: Vec<f64> = y.iter().map(|v| v * scale).collect();
        prop_assert_eq!(order_candidates(&y, &specs, false), order_candidates(&scaled, &specs, false));
    }

    #[test]
    fn relaxation_is_bit_reproducible(seed in any::<u64>()) {
        let prob = common::random_relaxed_problem(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = solve_relaxed(&prob, &RelaxConfig::default());
        let b = solve_relaxed(&prob, &RelaxConfig::default());
        prop_assert_eq!(a.y, b.y);
        prop_assert_eq!(a.p, b.p);
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        prop_assert_eq!(a.kkt_residual.to_bits(), b.kkt_residual.to_bits());
    }

    #[test]
    fn relaxed_scores_stay_in_the_box(seed in any::<u64>()) {
        let prob = common::random_relaxed_problem(&mut ChaCha8Rng::seed_from_u64(seed));
        let sol = solve_relaxed(&prob, &RelaxConfig::default());
        for (i, u) in prob.units.iter().enumerate() {
            prop_assert!((0.0..=1.0).contains(&sol.y[i]));
            prop_assert!(sol.p[i] >= u.p_lo - 1e-9 && sol.p[i] <= u.p_hi + 1e-9);
        }
        if sol.usable() {
            prop_assert!(sol.kkt_residual <= RelaxConfig::default().tol);
        }
    }

    #[test]
    fn sweep_is_a_cheapest_feasible_prefix(seed in any::<u64>(), n in 4usize..=10, must in 0usize..=2) {
        let inst = random_instance(n, must, seed).unwrap();
        let out = rruc_single_period(&inst, &RelaxConfig::default(), &SweepConfig::default()).unwrap();
        let mr = inst.must_run.len();

        let mut prefix: Vec<usize> = out.order[..out.k_selected - mr].to_vec();
        prefix.sort_unstable();
        let committed: Vec<usize> = (0..n).filter(|&i| out.committed[i]).collect();
        prop_assert_eq!(&committed, &prefix);

        if !out.diagnostics.emergency {
            let mut best = f64::INFINITY;
            for k in out.range.m..=out.range.m_max {
                let mut set = out.order[..k - mr].to_vec();
                set.sort_unstable();
                if let Some(obj) = inst.subset_objective(&set).unwrap() {
                    prop_assert!(out.objective <= obj + 1e-9 * obj.abs(), "k={} {} > {}", k, out.objective, obj);
                    best = best.min(obj);
                }
            }
            if best.is_finite() {
                prop_assert!((out.objective - best).abs() <= 1e-9 * best.abs());
            }
        }

        let d = out.diagnostics.clone();
        if !(d.capacity_short || d.floor_violated || d.emergency) {
            let chosen = || committed.iter().map(|&i| &inst.discretionary[i].spec).chain(inst.must_run.iter().map(|u| &u.spec));
            let p_max: f64 = chosen().map(|g| g.p_max).sum();
            let p_min: f64 = chosen().map(|g| g.p_min).sum();
            let reserve = chosen().map(|g| g.p_max).fold(0.0, f64::max);
            prop_assert!(p_max >= inst.targets.capacity + reserve - 1e-9);
            prop_assert!(p_min <= inst.targets.floor + 1e-9);
        }

        let parallel = SweepConfig { parallel: true, ..Default::default() };
        let par = rruc_single_period(&inst, &RelaxConfig::default(), &parallel).unwrap();
        prop_assert_eq!(par.k_selected, out.k_selected);
        prop_assert_eq!(par.objective.to_bits(), out.objective.to_bits());
    }

    #[test]
    fn enumeration_bounds_the_sweep(seed in any::<u64>(), n in 3usize..=10) {
        let inst = random_instance(n, 0, seed).unwrap();
        let best = exhaustive_uc(&inst).unwrap();
        prop_assert_eq!(best.evaluated, 1u64 << n);
        let out = rruc_single_period(&inst, &RelaxConfig::default(), &SweepConfig::default()).unwrap();
        let d = &out.diagnostics;
        if best.best_commitment.is_some() && !(d.capacity_short || d.floor_violated || d.emergency) {
            prop_assert!(best.best_objective <= out.objective + 1e-9 * out.objective.abs());
        }
    }

    #[test]
    fn scaling_fit_ignores_time_units(
        sizes in prop::collection::vec(1.0f64..1e4, 3..8),
        times in prop::collection::vec(1e-3f64..1e3, 8),
        factor in 1e-3f64..1e3,
    ) {
        let mut sizes = sizes;
        sizes.sort_by(f64::total_cmp);
        sizes.dedup();
        prop_assume!(sizes.len() >= 3 && sizes[sizes.len() - 1] / sizes[0] > 1.01);
        let times = &times[..sizes.len()];
        let scaled: Vec<f64> = times.iter().map(|t| t * factor).collect();
        let a = fit_power_law(&sizes, times).unwrap();
        let b = fit_power_law(&sizes, &scaled).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{} vs {}", a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn census_accounts_for_every_unit(seed in any::<u64>()) {
        let fleet = reconstructed_base_fleet();
        let mut trace = synthesize_demand(3_600.0, 7_300.0, 2, 5, seed).unwrap();
        trace.sigma_d = 45.0;
        for model in Model::ALL {
            let r = run_simulation(&fleet, &trace, model, &SimConfig::default()).unwrap();
            prop_assert_eq!(r.state_census.len(), r.periods);
            for c in &r.state_census {
                prop_assert_eq!(c.total() as usize, fleet.len());
            }
            for d in &r.decisions {
                for i in 0..fleet.len() {
                    let flags = d.committed[i] as u8 + d.starting[i] as u8 + d.stopping[i] as u8;
                    prop_assert!(flags <= 1);
                }
            }
        }
    }
}
