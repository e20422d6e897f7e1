//! End-to-end acceptance criteria. Each test prints one `PASS`/`FAIL` line.

use std::io::Write;
use std::time::Instant;

use onramp::barriers::barrier_rate;
use onramp::dynamics::input_for_accel;
use onramp::metrics::summarize;
use onramp::report::WallClock;
use onramp::scenario::{apply_override, bundled, bundled_names};
use onramp::sim::{first_divergence, replay_check, run_with_options, CavOrder, SimOptions};
use onramp::validate;
use onramp::{run, ControllerConfig, DecisionStatus, Lane, VehicleClass, VehicleParams};

const CAV1: usize = 1;

/// Written to the process stdout so the line survives test-output capture.
fn report(n: u32, passed: bool, detail: String) {
    let mark = if passed { "PASS" } else { "FAIL" };
    writeln!(std::io::stdout().lock(), "{mark} criterion {n}: {detail}").unwrap();
    assert!(passed, "criterion {n}: {detail}");
}

#[test]
fn criterion_1_three_vehicle_reproduction() {
    let spec = bundled("three_vehicle").unwrap();
    let started = Instant::now();
    let log = run(&spec).unwrap();
    let runtime = started.elapsed().as_secs_f64();

    let merge = log.merge_time(CAV1);
    let merge_ok = merge.is_some_and(|t| (t - 20.9).abs() <= 2.0);
    let collisions = log.count("COLLISION");
    let violations = log.count("SAFETY_VIOLATION");

    let cfg = ControllerConfig::default();
    let p = VehicleParams::default();
    let (_, first) = log.series(CAV1)[0];
    let u_max = input_for_accel(cfg.a_max, first.v, &p);
    let saturated = first.status == Some(DecisionStatus::Optimal) && (first.u - u_max).abs() <= 1e-6 * u_max.abs();

    report(
        1,
        merge_ok && collisions == 0 && violations == 0 && saturated && runtime < 2.0,
        format!(
            "CAV1 merge {merge:?} s (target 20.9 ± 2.0), {collisions} collisions, {violations} safety violations, \
             first input {:.3} N vs bound {u_max:.3} N, runtime {runtime:.3} s",
            first.u
        ),
    );
}

#[test]
fn criterion_2_solve_budget() {
    let spec = bundled("three_vehicle").unwrap();
    run(&spec).unwrap();
    let log = run(&spec).unwrap();
    let w = WallClock::from_samples(&log.decide_times);
    report(
        2,
        w.decisions > 0 && w.mean < 4e-3 && w.p99 < 4e-3,
        format!("{} decisions, mean {:.3e} s, p99 {:.3e} s (budget 4e-3)", w.decisions, w.mean, w.p99),
    );
}

#[test]
fn criterion_3_safety_suite() {
    let runs = validate::safety_runs(0..100, |_| {}).unwrap();
    let sizes_ok = runs.iter().all(|r| (2..=8).contains(&r.vehicles));
    let failed: Vec<u64> = runs.iter().filter(|r| !r.passed()).map(|r| r.seed).collect();
    let fallback = runs.iter().filter(|r| r.fallback).count();
    let min_barrier = runs.iter().filter(|r| !r.fallback).map(|r| r.min_barrier).fold(f64::INFINITY, f64::min);
    let min_gap = runs.iter().map(|r| r.min_gap).fold(f64::INFINITY, f64::min);
    report(
        3,
        runs.len() == 100 && sizes_ok && failed.is_empty(),
        format!(
            "{} runs, {fallback} with fallback; min barrier without fallback {min_barrier:.3e}, \
             min gap {min_gap:.3} m; failing seeds {failed:?}",
            runs.len()
        ),
    );
}

#[test]
fn random_scenarios_mix_classes_and_lanes() {
    let specs: Vec<_> = (0..100).map(onramp::scenario::random_scenario).collect();
    let any = |f: &dyn Fn(&onramp::Arrival) -> bool| specs.iter().any(|s| s.arrivals.iter().any(f));
    assert!(any(&|a| a.class == VehicleClass::Hdv));
    assert!(any(&|a| a.class == VehicleClass::Cav));
    assert!(any(&|a| a.lane == Lane::Ramp));
    assert!(specs.iter().any(|s| s.arrivals.len() == 2));
    assert!(specs.iter().any(|s| s.arrivals.len() == 8));
    let v_max = ControllerConfig::default().v_max;
    assert!(specs.iter().flat_map(|s| &s.arrivals).all(|a| a.speed > 0.0 && a.speed <= v_max));
}

#[test]
fn criterion_4_qp_oracle_equivalence() {
    let s = validate::qp_grid_stats(1000, 1);
    report(
        4,
        s.cases == 1000
            && s.status_mismatches == 0
            && s.max_u_gap <= 0.5
            && s.max_theta_gap <= 0.01
            && s.max_kkt <= 1e-8,
        format!(
            "{} instances ({} optimal, {} infeasible, {} status mismatches), max |Δu| {:.3e} N, \
             max |Δθ| {:.3e}, max KKT {:.3e}",
            s.cases, s.optimal, s.infeasible, s.status_mismatches, s.max_u_gap, s.max_theta_gap, s.max_kkt
        ),
    );
}

#[test]
fn criterion_5_derivative_correctness() {
    let s = validate::barrier_fd_stats(500, 2, &barrier_rate);
    report(
        5,
        s.samples == 500 && s.max_rel_error <= 1e-5,
        format!("{} states, S1..S6 and CLF, max relative error {:.3e} (tolerance 1e-5)", s.samples, s.max_rel_error),
    );
}

#[test]
fn criterion_6_multi_hdv_orderings() {
    let metric = |name: &str| {
        let m = summarize(&run(&bundled(name).unwrap()).unwrap());
        assert!(m.is_complete(), "{name}: incomplete vehicles {:?}", m.incomplete);
        (m.average_travel_time.unwrap(), m.average_energy.unwrap())
    };
    let (t1, e1) = metric("multi_hdv_i");
    let (t2, e2) = metric("multi_hdv_ii");
    let (t3, e3) = metric("multi_hdv_iii");
    report(
        6,
        t3 <= t2 && t2 < t1 && e2 < e1 && e3 < e1 && e2 < e3,
        format!(
            "travel time (i) {t1:.3} (ii) {t2:.3} (iii) {t3:.3} s; energy (i) {e1:.0} (ii) {e2:.0} (iii) {e3:.0} J"
        ),
    );
}

#[test]
fn criterion_7_numerical_hygiene() {
    let (traj, deriv) = validate::lead_script_errors().unwrap();
    let order = validate::rk4_observed_order();
    let spec = bundled("three_vehicle").unwrap();
    let log = run(&spec).unwrap();
    let energy_gap = validate::energy_trapezoid_error(&log);
    let half = apply_override(&spec, "controller.sample_dt", "0.05").unwrap();
    let coarse = log.merge_time(CAV1);
    let fine = run(&half).unwrap().merge_time(CAV1);
    let shift = match (coarse, fine) {
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::INFINITY,
    };
    report(
        7,
        traj <= 1e-6 && deriv <= 1e-6 && order >= 3.5 && energy_gap == 0.0 && shift < 0.3,
        format!(
            "lead script {traj:.3e} (derivatives {deriv:.3e}), RK4 order {order:.3}, energy gap {energy_gap:e} J, \
             Δt-halving merge shift {shift:.3} s"
        ),
    );
}

#[test]
fn criterion_8_determinism() {
    let mut problems = Vec::new();
    let mut scenarios = 0;
    for name in bundled_names() {
        scenarios += 1;
        let spec = bundled(name).unwrap();
        let log = run(&spec).unwrap();
        if let Err(d) = replay_check(&log, &spec).unwrap() {
            problems.push(format!("{name} replay: {d:?}"));
        }
        for order in [CavOrder::Reverse, CavOrder::Shuffled(7), CavOrder::Shuffled(99)] {
            let other = run_with_options(&spec, SimOptions { cav_order: order }).unwrap();
            if let Some(d) = first_divergence(&log, &other) {
                problems.push(format!("{name} {order:?}: {d:?}"));
            }
        }
    }
    report(
        8,
        scenarios >= 4 && problems.is_empty(),
        format!("{scenarios} bundled scenarios replayed under 4 evaluation orders; divergences {problems:?}"),
    );
}
