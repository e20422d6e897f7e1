//! Independent oracle suites: a dense grid search for the QP, finite
//! differences for barrier derivatives, the lead script against its own
//! derivative, and integrator refinement.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::barriers::{
    barrier_at, barrier_rate, cbf_row, clf_row, input_bound_rows, slack_floor_row, BarrierRate,
    ConstraintTag, ControllerConfig, LinearConstraint, NeighborView,
};
use crate::dynamics::{
    accumulate_energy, rk4, Lane, VehicleClass, VehicleParams, VehicleState,
};
use crate::error::Result;
use crate::qp::{self, QpProblem, QpStatus};
use crate::scenario::{parse_scenario, ScenarioSpec};
use crate::traffic::LeadScript;

pub const GRID_PITCH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Minimizer over a `u` grid of pitch [`GRID_PITCH`] spanning the input box,
/// with every row boundary added as an extra column. On each column `θ` is
/// the box-clamped minimizer of the `θ` terms. `None` when no column is feasible.
pub fn grid_oracle(qp: &QpProblem) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut breaks = Vec::new();
    for r in qp.rows.iter().filter(|r| r.coeff_theta == 0.0 && r.coeff_u != 0.0) {
        let edge = r.bound / r.coeff_u;
        breaks.push(edge);
        if r.coeff_u > 0.0 {
            hi = hi.min(edge);
        } else {
            lo = lo.max(edge);
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        lo = -2e4;
        hi = 2e4;
    }
    let slanted: Vec<&LinearConstraint> = qp.rows.iter().filter(|r| r.coeff_theta != 0.0).collect();
    for (i, a) in slanted.iter().enumerate() {
        for b in &slanted[i + 1..] {
            let det = a.coeff_u * b.coeff_theta - b.coeff_u * a.coeff_theta;
            if det != 0.0 {
                breaks.push((a.bound * b.coeff_theta - b.bound * a.coeff_theta) / det);
            }
        }
    }
    let mut columns: Vec<f64> = Vec::new();
    if lo <= hi {
        let n = ((hi - lo) / GRID_PITCH).floor() as usize;
        columns.extend((0..=n).map(|k| lo + k as f64 * GRID_PITCH));
        columns.push(hi);
        columns.extend(breaks.into_iter().filter(|u| *u >= lo && *u <= hi));
    }
    let (q, c) = (qp.quad_diag, qp.linear);
    let mut best: Option<(f64, f64, f64)> = None;
    for u in columns {
        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut ok = true;
        for r in &qp.rows {
            let rest = r.bound - r.coeff_u * u;
            let scale = r.scale();
            if r.coeff_theta > 0.0 {
                t_hi = t_hi.min(rest / r.coeff_theta);
            } else if r.coeff_theta < 0.0 {
                t_lo = t_lo.max(rest / r.coeff_theta);
            } else if rest < -1e-9 * scale {
                ok = false;
            }
        }
        if !ok || t_lo > t_hi + 1e-9 {
            continue;
        }
        let theta = (-c[1] / q[1]).clamp(t_lo, t_hi.max(t_lo));
        let f = 0.5 * q[0] * u * u + 0.5 * q[1] * theta * theta + c[0] * u + c[1] * theta;
        if best.is_none_or(|b| f < b.2) {
            best = Some((u, theta, f));
        }
    }
    best.map(|b| (b.0, b.1))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..=hi)
}

/// A QP assembled from barrier rows at a random ego/neighbor configuration.
pub fn random_barrier_qp(rng: &mut ChaCha8Rng, cfg: &ControllerConfig, p: &VehicleParams) -> QpProblem {
    let d = uniform(rng, 0.0, cfg.headway_ramp_length);
    let v = uniform(rng, cfg.v_min, cfg.v_max);
    let ego = VehicleState::new(0, VehicleClass::Cav, Lane::Ramp, d, v, 0.0);
    let mut rows = Vec::new();
    let push = |tag, nb: Option<&NeighborView>, rows: &mut Vec<LinearConstraint>| {
        let row = match cbf_row(tag, &ego, nb, cfg, p).expect("neighbor supplied") {
            Ok(r) => r,
            Err(v) => v.clamped_row,
        };
        rows.push(row);
    };
    push(ConstraintTag::MaxSpeed, None, &mut rows);
    push(ConstraintTag::MinSpeed, None, &mut rows);
    if rng.gen_bool(0.7) {
        let nb = NeighborView::frozen(uniform(rng, 0.5, 150.0), uniform(rng, cfg.v_min, cfg.v_max));
        push(ConstraintTag::MergeHeadway, Some(&nb), &mut rows);
        push(ConstraintTag::MergeBrake, Some(&nb), &mut rows);
    }
    if rng.gen_bool(0.5) {
        let nb = NeighborView::frozen(uniform(rng, 0.5, 150.0), uniform(rng, cfg.v_min, cfg.v_max));
        push(ConstraintTag::FollowHeadway, Some(&nb), &mut rows);
        push(ConstraintTag::FollowBrake, Some(&nb), &mut rows);
    }
    rows.push(clf_row(&ego, cfg, p));
    let (upper, lower) = input_bound_rows(&ego, cfg, p);
    rows.push(upper);
    rows.push(lower);
    if cfg.slack_nonnegative {
        rows.push(slack_floor_row());
    }
    QpProblem::new([2.0 * p.c_prime(), 2.0 * cfg.slack_weight], [v, 0.0], rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QpSuiteStats {
    pub cases: usize,
    pub optimal: usize,
    pub infeasible: usize,
    pub max_u_gap: f64,
    pub max_theta_gap: f64,
    pub max_kkt: f64,
    pub min_multiplier: f64,
    pub max_violation: f64,
    /// Solver and grid disagree on feasibility.
    pub status_mismatches: usize,
}

pub fn qp_grid_stats(n: usize, seed: u64) -> QpSuiteStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = VehicleParams::default();
    let mut stats = QpSuiteStats { cases: n, ..Default::default() };
    for k in 0..n {
        let cfg = ControllerConfig { slack_nonnegative: k % 2 == 1, ..Default::default() };
        let problem = random_barrier_qp(&mut rng, &cfg, &p);
        let sol = qp::solve(&problem);
        let grid = grid_oracle(&problem);
        match (sol.status, grid) {
            (QpStatus::Optimal, Some((gu, gt))) => {
                stats.optimal += 1;
                stats.max_u_gap = stats.max_u_gap.max((sol.u_star - gu).abs());
                stats.max_theta_gap = stats.max_theta_gap.max((sol.theta_star - gt).abs());
                let (kkt, min_l) = qp::kkt_residual(&problem, &sol);
                stats.max_kkt = stats.max_kkt.max(kkt);
                stats.min_multiplier = stats.min_multiplier.min(min_l);
                stats.max_violation = stats.max_violation.max(problem.max_violation(sol.u_star, sol.theta_star));
            }
            (QpStatus::Infeasible, None) => stats.infeasible += 1,
            _ => stats.status_mismatches += 1,
        }
    }
    stats
}

pub fn qp_grid_suite(n: usize, seed: u64) -> SuiteReport {
    let s = qp_grid_stats(n, seed);
    let passed = s.status_mismatches == 0
        && s.max_u_gap <= 0.5
        && s.max_theta_gap <= 0.01
        && s.max_kkt <= 1e-8
        && s.min_multiplier >= 0.0
        && s.max_violation <= qp::FEASIBILITY_TOL;
    SuiteReport {
        name: "qp-grid",
        passed,
        detail: format!(
            "{} cases ({} optimal, {} infeasible, {} mismatched); max |Δu| {:.3e} N, max |Δθ| {:.3e}, max KKT {:.3e}",
            s.cases, s.optimal, s.infeasible, s.status_mismatches, s.max_u_gap, s.max_theta_gap, s.max_kkt
        ),
    }
}

/// Signature of an analytic barrier-rate model, so a mutated one can be checked.
pub type RateFn = dyn Fn(ConstraintTag, &VehicleState, Option<&NeighborView>, &ControllerConfig, &VehicleParams) -> Result<BarrierRate>;

/// `(d, v, gap)` after moving `h` (possibly negative) under input `u`, the
/// neighbor at constant speed.
fn flow(d: f64, v: f64, gap: f64, v_other: f64, u: f64, h: f64, p: &VehicleParams) -> (f64, f64, f64) {
    let (d1, v1) = rk4(d, v, u, h, p);
    (d1, v1, gap + v_other * h - (d1 - d))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FdStats {
    pub samples: usize,
    pub max_rel_error: f64,
}

/// Largest relative mismatch between analytic `dS/dt` (and `dV/dt` for the
/// CLF) and central differences along the flow through random states.
pub fn barrier_fd_stats(n: usize, seed: u64, rate: &RateFn) -> FdStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = VehicleParams::default();
    let cfg = ControllerConfig::default();
    let m = p.effective_mass();
    let h = 1e-3;
    let mut worst = 0.0f64;
    let rel = |an: f64, fd: f64| (an - fd).abs() / an.abs().max(1.0);
    for _ in 0..n {
        let d = uniform(&mut rng, 0.0, cfg.headway_ramp_length);
        let v = uniform(&mut rng, 1.0, cfg.v_max);
        let gap = uniform(&mut rng, 1.0, 150.0);
        let v_other = uniform(&mut rng, 0.0, cfg.v_max);
        let a = uniform(&mut rng, cfg.a_min, cfg.a_max);
        let u = m * a + crate::dynamics::resistance_force(v, &p);
        let ego = VehicleState::new(0, VehicleClass::Cav, Lane::Main, d, v, 0.0);
        let nb = NeighborView::frozen(gap, v_other);
        let (dp, vp, gp) = flow(d, v, gap, v_other, u, h, &p);
        let (dm, vm, gm) = flow(d, v, gap, v_other, u, -h, &p);
        for tag in ConstraintTag::BARRIERS {
            let nbr = tag.needs_neighbor().then_some(&nb);
            let Ok(r) = rate(tag, &ego, nbr, &cfg, &p) else {
                worst = f64::INFINITY;
                continue;
            };
            let analytic = r.drift + r.input_coeff * u;
            let at = |d, v, g| {
                let nb = NeighborView::frozen(g, v_other);
                barrier_at(tag, d, v, tag.needs_neighbor().then_some(&nb), &cfg).expect("defined")
            };
            let fd = (at(dp, vp, gp) - at(dm, vm, gm)) / (2.0 * h);
            worst = worst.max(rel(analytic, fd));
        }
        let row = clf_row(&ego, &cfg, &p);
        let err = v - cfg.v_des;
        let analytic = row.coeff_u * u - row.bound - cfg.clf_rate * err * err;
        let lyap = |v: f64| (v - cfg.v_des) * (v - cfg.v_des);
        let fd = (lyap(vp) - lyap(vm)) / (2.0 * h);
        worst = worst.max(rel(analytic, fd));
    }
    FdStats { samples: n, max_rel_error: worst }
}

pub fn barrier_fd_suite_with(n: usize, seed: u64, rate: &RateFn) -> SuiteReport {
    let s = barrier_fd_stats(n, seed, rate);
    SuiteReport {
        name: "barrier-fd",
        passed: s.max_rel_error <= 1e-5,
        detail: format!("{} states, S1..S6 + CLF; max relative error {:.3e}", s.samples, s.max_rel_error),
    }
}

pub fn barrier_fd_suite(n: usize, seed: u64) -> SuiteReport {
    barrier_fd_suite_with(n, seed, &barrier_rate)
}

/// Largest deviation of the simulated scripted lead from the closed form,
/// together with the largest mismatch between `d'` and `v` by central differences.
pub fn lead_script_errors() -> Result<(f64, f64)> {
    let spec: ScenarioSpec = parse_scenario(
        r#"{"name": "lead_only", "duration": 30.0, "runout_length": 1000.0, "arrivals": [
            {"time": 0.0, "lane": "main", "class": "hdv", "speed": 20.0, "controller": "scripted"}]}"#,
    )?;
    let script = spec.lead_script;
    let log = crate::sim::run(&spec)?;
    if log.steps.len() != 301 || log.steps.iter().any(|s| s.vehicles.len() != 1) {
        return Ok((f64::INFINITY, f64::INFINITY));
    }
    let mut traj = 0.0f64;
    for step in &log.steps {
        let (d, v) = script.lead_state(step.t);
        let Some(r) = step.vehicles.first() else { continue };
        traj = traj.max((r.d - d).abs()).max((r.v - v).abs());
    }
    let h = 1e-4;
    let mut deriv = 0.0f64;
    for k in 0..=300 {
        let t = k as f64 * 0.1;
        let (dp, _) = script.lead_state(t + h);
        let (dm, _) = script.lead_state(t - h);
        let (_, v) = script.lead_state(t);
        deriv = deriv.max(((dp - dm) / (2.0 * h) - v).abs());
        let (_, vp) = script.lead_state(t + h);
        let (_, vm) = script.lead_state(t - h);
        deriv = deriv.max(((vp - vm) / (2.0 * h) - script.lead_accel(t)).abs());
    }
    let default = LeadScript::default().lead_state(0.0);
    if (default.0 - 97.0).abs() > 1e-12 || (default.1 - 20.0).abs() > 1e-12 {
        deriv = f64::INFINITY;
    }
    Ok((traj, deriv))
}

pub fn lead_script_suite() -> SuiteReport {
    match lead_script_errors() {
        Ok((traj, deriv)) => SuiteReport {
            name: "lead-script",
            passed: traj <= 1e-6 && deriv <= 1e-6,
            detail: format!("simulated vs closed form {traj:.3e}; derivative consistency {deriv:.3e}"),
        },
        Err(e) => SuiteReport { name: "lead-script", passed: false, detail: e.to_string() },
    }
}

/// Observed RK4 order from successive halvings of a 10 s run under a
/// constant input, against a fine reference.
pub fn rk4_observed_order() -> f64 {
    let p = VehicleParams::default();
    let (v0, u, horizon) = (5.0, 6000.0, 10.0);
    let solve = |dt: f64| {
        let n = (horizon / dt).round() as usize;
        let (mut d, mut v) = (0.0, v0);
        for _ in 0..n {
            (d, v) = rk4(d, v, u, dt, &p);
        }
        (d, v)
    };
    let reference = solve(1e-3);
    let err = |dt: f64| {
        let (d, v) = solve(dt);
        (d - reference.0).abs().max((v - reference.1).abs())
    };
    let (e1, e2, e3) = (err(0.4), err(0.2), err(0.1));
    ((e1 / e2).log2()).min((e2 / e3).log2())
}

/// Largest gap between logged cumulative energy and a trapezoid rebuilt
/// from the logged power column.
pub fn energy_trapezoid_error(log: &crate::sim::SimLog) -> f64 {
    let dt = log.header.scenario.controller.sample_dt;
    let mut worst = 0.0f64;
    for info in &log.vehicles {
        let series = log.series(info.uid);
        let mut acc = 0.0;
        for (k, (_, r)) in series.iter().enumerate() {
            if k > 0 {
                acc += accumulate_energy(series[k - 1].1.power, r.power, dt);
            }
            worst = worst.max((acc - r.energy).abs());
        }
    }
    worst
}

pub fn integrator_suite() -> SuiteReport {
    let order = rk4_observed_order();
    let energy = crate::scenario::bundled("three_vehicle")
        .and_then(|s| crate::sim::run(&s))
        .map(|log| energy_trapezoid_error(&log))
        .unwrap_or(f64::INFINITY);
    SuiteReport {
        name: "integrator",
        passed: order >= 3.5 && energy == 0.0,
        detail: format!("observed RK4 order {order:.3}; energy-vs-trapezoid max gap {energy:e} J"),
    }
}

/// Safety outcome of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyRun {
    pub seed: u64,
    pub vehicles: usize,
    pub fallback: bool,
    pub violation_events: usize,
    /// Smallest defined barrier value over all logged instants.
    pub min_barrier: f64,
    /// Smallest bumper gap between consecutive vehicles on one road.
    pub min_gap: f64,
    pub collided: bool,
}

impl SafetyRun {
    /// Runs without fallback keep `S ≥ -1e-2`; every run keeps gaps positive.
    pub fn passed(&self) -> bool {
        let gaps = !self.collided && self.min_gap > 0.0;
        gaps && (self.fallback || self.min_barrier >= -1e-2)
    }
}

pub fn safety_run(spec: &ScenarioSpec) -> Result<SafetyRun> {
    let log = crate::sim::run(spec)?;
    let mut min_barrier = f64::INFINITY;
    let mut min_gap = f64::INFINITY;
    for step in &log.steps {
        for r in &step.vehicles {
            for b in r.barriers.iter().flatten() {
                min_barrier = min_barrier.min(*b);
            }
        }
        for g in crate::sim::road_gaps(&step.vehicles) {
            min_gap = min_gap.min(g);
        }
    }
    Ok(SafetyRun {
        seed: spec.seed,
        vehicles: spec.arrivals.len(),
        fallback: log.count("FALLBACK") > 0,
        violation_events: log.count("SAFETY_VIOLATION"),
        min_barrier,
        min_gap,
        collided: log.count("COLLISION") > 0,
    })
}

/// [`safety_run`] over [`random_scenario`](crate::scenario::random_scenario)
/// for each seed, after `tweak`.
pub fn safety_runs(
    seeds: std::ops::Range<u64>,
    tweak: impl Fn(&mut ScenarioSpec),
) -> Result<Vec<SafetyRun>> {
    seeds
        .map(|seed| {
            let mut spec = crate::scenario::random_scenario(seed);
            tweak(&mut spec);
            safety_run(&spec)
        })
        .collect()
}

pub fn safety_suite(n: u64) -> SuiteReport {
    match safety_runs(0..n, |_| {}) {
        Ok(runs) => {
            let failed: Vec<u64> = runs.iter().filter(|r| !r.passed()).map(|r| r.seed).collect();
            let with_fallback = runs.iter().filter(|r| r.fallback).count();
            SuiteReport {
                name: "safety",
                passed: failed.is_empty(),
                detail: format!(
                    "{} runs, {with_fallback} with fallback; failing seeds {failed:?}",
                    runs.len()
                ),
            }
        }
        Err(e) => SuiteReport { name: "safety", passed: false, detail: e.to_string() },
    }
}

pub fn run_all() -> Vec<SuiteReport> {
    vec![
        qp_grid_suite(1000, 1),
        barrier_fd_suite(500, 2),
        lead_script_suite(),
        integrator_suite(),
        safety_suite(100),
    ]
}
