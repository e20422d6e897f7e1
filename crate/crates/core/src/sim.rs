//! Fixed-step synchronized simulation of the merging zone.
//!
//! Each step admits arrivals, freezes a snapshot, computes every vehicle's
//! input against that snapshot, logs the sampling instant, and then
//! integrates everyone over `Δt` with the inputs held. Crossing `d > L`
//! retires the vehicle's FIFO identity and switches it to car following.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::barriers::ConstraintTag;
use crate::controller::{self, DecisionStatus, NeighborRefs};
use crate::coordination::CoordinatorState;
use crate::dynamics::{
    accumulate_energy, input_for_accel, integrate_step, motor_power, resistance_force, Lane, Mode,
    VehicleClass, VehicleParams, VehicleState,
};
use crate::error::Result;
use crate::scenario::{ControllerKind, ScenarioSpec};
use crate::traffic::{idm_accel, idm_free};

pub const CSV_COLUMNS: [&str; 23] = [
    "t", "uid", "id", "class", "lane", "mode", "d", "v", "a", "u", "theta", "power", "energy",
    "status", "active_set", "gap_ip", "gap_merge", "s1", "s2", "s3", "s4", "s5", "s6",
];

/// One vehicle at one sampling instant. `u`, `a`, `theta` and `status`
/// describe the input held over the interval that starts here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub uid: usize,
    pub id: Option<u32>,
    pub class: VehicleClass,
    pub lane: Lane,
    pub mode: Mode,
    pub d: f64,
    pub v: f64,
    pub a: f64,
    pub u: f64,
    pub theta: Option<f64>,
    pub power: f64,
    pub energy: f64,
    pub status: Option<DecisionStatus>,
    pub active_set: Vec<ConstraintTag>,
    pub gap_ip: Option<f64>,
    pub gap_merge: Option<f64>,
    pub barriers: [Option<f64>; 6],
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|x| x.to_string()).unwrap_or_default()
}

impl VehicleRecord {
    /// CSV cells after `t`, in [`CSV_COLUMNS`] order. Floats use the shortest
    /// round-trip representation, so equal cells mean bitwise-equal values.
    pub fn cells(&self) -> Vec<String> {
        let mut out = vec![
            self.uid.to_string(),
            opt(self.id),
            self.class.as_str().to_string(),
            self.lane.as_str().to_string(),
            self.mode.as_str().to_string(),
            self.d.to_string(),
            self.v.to_string(),
            self.a.to_string(),
            self.u.to_string(),
            opt(self.theta),
            self.power.to_string(),
            self.energy.to_string(),
            self.status.map(|s| s.as_str().to_string()).unwrap_or_default(),
            self.active_set.iter().map(|t| t.as_str()).collect::<Vec<_>>().join("|"),
            opt(self.gap_ip),
            opt(self.gap_merge),
        ];
        out.extend(self.barriers.iter().map(|s| opt(*s)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub vehicles: Vec<VehicleRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Event {
    Entry { t: f64, uid: usize, id: u32, lane: Lane },
    Merge { t: f64, uid: usize, position: f64 },
    Retire { t: f64, uid: usize, id: u32 },
    Fallback { t: f64, uid: usize },
    SafetyViolation { t: f64, uid: usize, tag: ConstraintTag, value: f64 },
    SpeedClamp { t: f64, uid: usize },
    Collision { t: f64, lane: Lane, behind: usize, ahead: usize, gap: f64 },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::Entry { .. } => "ENTRY",
            Event::Merge { .. } => "MERGE",
            Event::Retire { .. } => "RETIRE",
            Event::Fallback { .. } => "FALLBACK",
            Event::SafetyViolation { .. } => "SAFETY_VIOLATION",
            Event::SpeedClamp { .. } => "SPEED_CLAMP",
            Event::Collision { .. } => "COLLISION",
        }
    }

    pub fn time(&self) -> f64 {
        match *self {
            Event::Entry { t, .. }
            | Event::Merge { t, .. }
            | Event::Retire { t, .. }
            | Event::Fallback { t, .. }
            | Event::SafetyViolation { t, .. }
            | Event::SpeedClamp { t, .. }
            | Event::Collision { t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub scenario: ScenarioSpec,
    pub config_hash: String,
}

/// Static facts about each admitted vehicle, indexed by uid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleInfo {
    pub uid: usize,
    pub class: VehicleClass,
    pub lane: Lane,
    pub controller: ControllerKind,
    pub entry_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub header: LogHeader,
    pub vehicles: Vec<VehicleInfo>,
    pub steps: Vec<StepRecord>,
    pub events: Vec<Event>,
    /// The run stopped on a collision.
    pub halted: bool,
    /// Wall-clock time of every CAV decision, s. Excluded from comparisons.
    #[serde(skip)]
    pub decide_times: Vec<f64>,
}

impl SimLog {
    pub fn count(&self, kind: &str) -> usize {
        self.events.iter().filter(|e| e.kind() == kind).count()
    }

    pub fn merge_time(&self, uid: usize) -> Option<f64> {
        self.events.iter().find_map(|e| match *e {
            Event::Merge { t, uid: u, .. } if u == uid => Some(t),
            _ => None,
        })
    }

    /// Every logged row of one vehicle, paired with its timestamp.
    pub fn series(&self, uid: usize) -> Vec<(f64, &VehicleRecord)> {
        self.steps
            .iter()
            .filter_map(|s| s.vehicles.iter().find(|r| r.uid == uid).map(|r| (s.t, r)))
            .collect()
    }
}

/// Order in which CAV decisions are computed inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CavOrder {
    #[default]
    Forward,
    Reverse,
    Shuffled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    pub cav_order: CavOrder,
}

pub fn config_hash(spec: &ScenarioSpec) -> String {
    let canonical = serde_json::to_string(spec).expect("scenario serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

struct Agent {
    state: VehicleState,
    kind: ControllerKind,
    last_power: Option<f64>,
}

struct Pending {
    uid: usize,
    time: f64,
    arrival: crate::scenario::Arrival,
}

/// Arrivals sorted by time, main lane first on ties, then file order; the
/// position in this order is the vehicle's uid.
fn admission_order(spec: &ScenarioSpec) -> Vec<Pending> {
    let mut idx: Vec<usize> = (0..spec.arrivals.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (&spec.arrivals[a], &spec.arrivals[b]);
        x.time.total_cmp(&y.time).then(x.lane.cmp(&y.lane)).then(a.cmp(&b))
    });
    idx.into_iter()
        .enumerate()
        .map(|(uid, k)| Pending {
            uid,
            time: spec.arrivals[k].time,
            arrival: spec.arrivals[k].clone(),
        })
        .collect()
}

struct Input {
    u: f64,
    theta: Option<f64>,
    status: Option<DecisionStatus>,
    active_set: Vec<ConstraintTag>,
    neighbors: NeighborRefs,
    barriers: [Option<f64>; 6],
}

fn accel_for_input(u: f64, v: f64, p: &VehicleParams) -> f64 {
    (u - resistance_force(v, p)) / p.effective_mass()
}

fn gap_to(snapshot: &[VehicleState], ego: &VehicleState, uid: Option<usize>) -> Option<f64> {
    uid.and_then(|u| snapshot.iter().find(|s| s.uid == u))
        .map(|o| o.position - ego.position)
}

fn hdv_input(
    ego: &VehicleState,
    snapshot: &[VehicleState],
    coord: &CoordinatorState,
    spec: &ScenarioSpec,
) -> Result<Input> {
    let cfg = &spec.controller;
    let p = &spec.vehicle;
    let neighbors = controller::resolve_neighbors(ego, snapshot, coord)?;
    let leader_accel = |uid: Option<usize>| -> Option<f64> {
        let other = snapshot.iter().find(|s| Some(s.uid) == uid)?;
        let gap = other.position - ego.position;
        Some(idm_accel(gap, ego.speed, other.speed, &spec.idm, cfg.a_min, cfg.a_max).unwrap_or(cfg.a_min))
    };
    let mut a = leader_accel(neighbors.follow)
        .unwrap_or_else(|| idm_free(ego.speed, &spec.idm, cfg.a_min, cfg.a_max));
    let in_window = ego.mode == Mode::Merging && ego.position >= spec.zone_length() - spec.hdv_merge_window;
    if in_window {
        let ahead = gap_to(snapshot, ego, neighbors.merge).is_some_and(|g| g > 0.0);
        if ahead {
            if let Some(am) = leader_accel(neighbors.merge) {
                a = a.min(am);
            }
        }
    }
    Ok(Input {
        u: input_for_accel(a, ego.speed, p),
        theta: None,
        status: None,
        active_set: Vec::new(),
        neighbors,
        barriers: [None; 6],
    })
}

fn on_road(road: Lane, mode: Mode, lane: Lane) -> bool {
    match road {
        Lane::Main => mode != Mode::Merging || lane == Lane::Main,
        Lane::Ramp => mode == Mode::Merging && lane == Lane::Ramp,
    }
}

/// Gaps between consecutive logged vehicles on each physical road.
pub fn road_gaps(rows: &[VehicleRecord]) -> Vec<f64> {
    let mut out = Vec::new();
    for road in [Lane::Main, Lane::Ramp] {
        let mut d: Vec<f64> = rows.iter().filter(|r| on_road(road, r.mode, r.lane)).map(|r| r.d).collect();
        d.sort_by(f64::total_cmp);
        out.extend(d.windows(2).map(|w| w[1] - w[0]));
    }
    out
}

/// Lanes as physically occupied: the main road holds main-lane vehicles in
/// the zone plus everyone past the merge point; the ramp holds the rest.
fn collisions(agents: &[Agent], t: f64) -> Vec<Event> {
    let mut out = Vec::new();
    for road in [Lane::Main, Lane::Ramp] {
        let mut on: Vec<&VehicleState> = agents
            .iter()
            .map(|a| &a.state)
            .filter(|s| on_road(road, s.mode, s.lane))
            .collect();
        on.sort_by(|a, b| a.position.total_cmp(&b.position).then(b.uid.cmp(&a.uid)));
        for w in on.windows(2) {
            let gap = w[1].position - w[0].position;
            if gap <= 0.0 {
                out.push(Event::Collision {
                    t,
                    lane: road,
                    behind: w[0].uid.max(w[1].uid),
                    ahead: w[0].uid.min(w[1].uid),
                    gap,
                });
            }
        }
    }
    out
}

/// `k·Δt` snapped to the nanosecond so logged times print as decimals.
fn step_time(k: usize, dt: f64) -> f64 {
    (k as f64 * dt * 1e9).round() / 1e9
}

pub fn run(spec: &ScenarioSpec) -> Result<SimLog> {
    run_with_options(spec, SimOptions::default())
}

pub fn run_with_options(spec: &ScenarioSpec, opts: SimOptions) -> Result<SimLog> {
    spec.validate()?;
    let cfg = &spec.controller;
    let p = &spec.vehicle;
    let dt = cfg.sample_dt;
    let zone = spec.zone_length();
    let exit_at = zone + spec.runout_length;
    let max_steps = (spec.duration / dt + 1e-9).floor() as usize;

    let pending = admission_order(spec);
    let mut next_pending = 0;
    let mut agents: Vec<Agent> = Vec::new();
    let mut coord = CoordinatorState::new(zone);
    let mut log = SimLog {
        header: LogHeader {
            scenario: spec.clone(),
            config_hash: config_hash(spec),
        },
        vehicles: Vec::new(),
        steps: Vec::new(),
        events: Vec::new(),
        halted: false,
        decide_times: Vec::new(),
    };

    for k in 0..=max_steps {
        let t = step_time(k, dt);

        // (1) admit
        while next_pending < pending.len() && pending[next_pending].time <= t + 1e-9 {
            let pd = &pending[next_pending];
            let a = &pd.arrival;
            let (d, v) = match a.controller {
                ControllerKind::Scripted => spec.lead_script.lead_state(t),
                _ => (a.position, a.speed),
            };
            let mut state = VehicleState::new(pd.uid, a.class, a.lane, d, v, t);
            let id = coord.register(pd.uid, a.lane, a.class);
            state.id = Some(id);
            log.events.push(Event::Entry { t, uid: pd.uid, id, lane: a.lane });
            log.vehicles.push(VehicleInfo {
                uid: pd.uid,
                class: a.class,
                lane: a.lane,
                controller: a.controller,
                entry_time: t,
            });
            agents.push(Agent { state, kind: a.controller, last_power: None });
            next_pending += 1;
        }
        if agents.is_empty() {
            if next_pending == pending.len() {
                break;
            }
            continue;
        }

        // (2) snapshot
        let snapshot: Vec<VehicleState> = agents.iter().map(|a| a.state.clone()).collect();

        // (3) inputs
        let mut inputs: Vec<Option<Input>> = (0..agents.len()).map(|_| None).collect();
        let mut cav_idx: Vec<usize> = Vec::new();
        for (i, ag) in agents.iter().enumerate() {
            let ego = &ag.state;
            match ag.kind {
                ControllerKind::CbfClf => cav_idx.push(i),
                ControllerKind::Scripted => {
                    let (_, v_next) = spec.lead_script.lead_state(t + dt);
                    let a_avg = (v_next - ego.speed) / dt;
                    inputs[i] = Some(Input {
                        u: input_for_accel(a_avg, ego.speed, p),
                        theta: None,
                        status: None,
                        active_set: Vec::new(),
                        neighbors: controller::resolve_neighbors(ego, &snapshot, &coord)?,
                        barriers: [None; 6],
                    });
                }
                ControllerKind::Idm => inputs[i] = Some(hdv_input(ego, &snapshot, &coord, spec)?),
            }
        }
        match opts.cav_order {
            CavOrder::Forward => {}
            CavOrder::Reverse => cav_idx.reverse(),
            CavOrder::Shuffled(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                cav_idx.shuffle(&mut rng);
            }
        }
        // Predictor pass: every CAV plans against the snapshot, then all of
        // them re-plan against the accelerations planned for this interval.
        let mut planned = snapshot.clone();
        let mut predict_time = vec![0.0; agents.len()];
        if cfg.neighbor_accel_feedforward {
            for (j, inp) in inputs.iter().enumerate() {
                if let Some(inp) = inp {
                    planned[j].last_accel = accel_for_input(inp.u, snapshot[j].speed, p);
                }
            }
            for &i in &cav_idx {
                let start = Instant::now();
                let ego = &snapshot[i];
                let asm = controller::assemble(ego, &snapshot, &coord, cfg, p)?;
                let dec = controller::decide_assembled(ego, &asm, cfg, p);
                planned[i].last_accel = accel_for_input(dec.u, ego.speed, p);
                predict_time[i] = start.elapsed().as_secs_f64();
            }
        }
        let mut step_events: Vec<(usize, Event)> = Vec::new();
        for &i in &cav_idx {
            let ego = &agents[i].state;
            let start = Instant::now();
            let asm = controller::assemble(ego, &planned, &coord, cfg, p)?;
            let dec = controller::decide_assembled(ego, &asm, cfg, p);
            let elapsed = predict_time[i] + start.elapsed().as_secs_f64();
            if ego.mode != Mode::Exited {
                log.decide_times.push(elapsed);
            }
            let observed = if ego.mode == Mode::Exited { &[][..] } else { &asm.violations[..] };
            for v in observed {
                step_events.push((ego.uid, Event::SafetyViolation { t, uid: ego.uid, tag: v.tag, value: v.value }));
            }
            if dec.status == DecisionStatus::FallbackBrake && ego.mode != Mode::Exited {
                step_events.push((ego.uid, Event::Fallback { t, uid: ego.uid }));
            }
            inputs[i] = Some(Input {
                u: dec.u,
                theta: Some(dec.theta),
                status: Some(dec.status),
                active_set: dec.active_set,
                neighbors: asm.neighbors,
                barriers: asm.barrier_values,
            });
        }
        step_events.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.kind().cmp(b.1.kind())));
        log.events.extend(step_events.into_iter().map(|(_, e)| e));

        // log the sampling instant
        let mut rows = Vec::with_capacity(agents.len());
        for (ag, input) in agents.iter_mut().zip(&inputs) {
            if ag.state.mode == Mode::Exited {
                continue;
            }
            let (u, input) = match input {
                Some(inp) => (inp.u, Some(inp)),
                None => (0.0, None),
            };
            let power = motor_power(ag.state.speed, u, p);
            let energy = match ag.last_power {
                Some(prev) => ag.state.energy_used + accumulate_energy(prev, power, dt),
                None => 0.0,
            };
            ag.state.energy_used = energy;
            ag.last_power = Some(power);
            let s = &ag.state;
            let a = if input.is_some() {
                (u - resistance_force(s.speed, p)) / p.effective_mass()
            } else {
                0.0
            };
            rows.push(VehicleRecord {
                uid: s.uid,
                id: s.id,
                class: s.class,
                lane: s.lane,
                mode: s.mode,
                d: s.position,
                v: s.speed,
                a,
                u,
                theta: input.and_then(|i| i.theta),
                power,
                energy,
                status: input.and_then(|i| i.status),
                active_set: input.map(|i| i.active_set.clone()).unwrap_or_default(),
                gap_ip: input.and_then(|i| gap_to(&snapshot, s, i.neighbors.follow)),
                gap_merge: input.and_then(|i| gap_to(&snapshot, s, i.neighbors.merge)),
                barriers: input.map(|i| i.barriers).unwrap_or([None; 6]),
            });
        }
        rows.sort_by_key(|r| r.uid);
        log.steps.push(StepRecord { t, vehicles: rows });

        let hits = collisions(&agents, t);
        if !hits.is_empty() {
            log.events.extend(hits);
            log.halted = true;
            break;
        }
        let all_out = next_pending == pending.len() && agents.iter().all(|a| a.state.mode == Mode::Exited);
        if k == max_steps || all_out {
            break;
        }

        // (4) integrate
        let t_next = step_time(k + 1, dt);
        for (ag, input) in agents.iter_mut().zip(&inputs) {
            let u = input.as_ref().map_or(0.0, |i| i.u);
            if ag.kind == ControllerKind::Scripted {
                let (d, v) = spec.lead_script.lead_state(t_next);
                ag.state.last_accel = (v - ag.state.speed) / dt;
                ag.state.position = d;
                ag.state.speed = v;
                ag.state.last_input = u;
            } else {
                let out = integrate_step(&ag.state, u, dt, p);
                if out.speed_clamped && ag.state.mode != Mode::Exited {
                    log.events.push(Event::SpeedClamp { t: t_next, uid: ag.state.uid });
                }
                ag.state = out.state;
            }
        }

        // (5) merge detection, lowest identity first
        let mut crossed: Vec<(u32, usize)> = agents
            .iter()
            .filter(|a| a.state.mode == Mode::Merging && a.state.position > zone)
            .map(|a| (a.state.id.expect("merging vehicles hold an identity"), a.state.uid))
            .collect();
        crossed.sort();
        for &(_, uid) in &crossed {
            let id = coord.id_of(uid).expect("registered");
            coord.retire(id)?;
            let ag = agents.iter_mut().find(|a| a.state.uid == uid).expect("active");
            ag.state.mode = Mode::Following;
            ag.state.merge_time = Some(t_next);
            ag.state.id = None;
            log.events.push(Event::Merge { t: t_next, uid, position: ag.state.position });
            log.events.push(Event::Retire { t: t_next, uid, id });
        }
        for ag in agents.iter_mut() {
            if ag.state.mode == Mode::Merging {
                ag.state.id = coord.id_of(ag.state.uid);
            } else if ag.state.mode == Mode::Following && ag.state.position > exit_at {
                ag.state.mode = Mode::Exited;
            }
        }
    }
    Ok(log)
}

/// First place two logs disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub step: usize,
    pub uid: Option<usize>,
    pub field: String,
    pub expected: String,
    pub found: String,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.uid {
            Some(uid) => write!(
                f,
                "step {} vehicle {uid} field `{}`: expected {}, found {}",
                self.step, self.field, self.expected, self.found
            ),
            None => write!(
                f,
                "step {} `{}`: expected {}, found {}",
                self.step, self.field, self.expected, self.found
            ),
        }
    }
}

/// Compare two logs bitwise, ignoring wall-clock data.
pub fn first_divergence(expected: &SimLog, found: &SimLog) -> Option<Divergence> {
    let div = |step, uid, field: &str, e: String, f: String| {
        Some(Divergence { step, uid, field: field.to_string(), expected: e, found: f })
    };
    if expected.header != found.header {
        return div(0, None, "header", expected.header.config_hash.clone(), found.header.config_hash.clone());
    }
    for (k, (a, b)) in expected.steps.iter().zip(&found.steps).enumerate() {
        if a.t.to_bits() != b.t.to_bits() {
            return div(k, None, "t", a.t.to_string(), b.t.to_string());
        }
        for (ra, rb) in a.vehicles.iter().zip(&b.vehicles) {
            for ((name, ca), cb) in CSV_COLUMNS[1..].iter().zip(ra.cells()).zip(rb.cells()) {
                if ca != cb {
                    return div(k, Some(ra.uid), name, ca, cb);
                }
            }
        }
        if a.vehicles.len() != b.vehicles.len() {
            return div(k, None, "vehicle count", a.vehicles.len().to_string(), b.vehicles.len().to_string());
        }
    }
    if expected.steps.len() != found.steps.len() {
        return div(
            expected.steps.len().min(found.steps.len()),
            None,
            "step count",
            expected.steps.len().to_string(),
            found.steps.len().to_string(),
        );
    }
    for (k, (a, b)) in expected.events.iter().zip(&found.events).enumerate() {
        let (ja, jb) = (serde_json::to_string(a).unwrap(), serde_json::to_string(b).unwrap());
        if ja != jb {
            return div(k, None, "event", ja, jb);
        }
    }
    if expected.events.len() != found.events.len() || expected.halted != found.halted {
        return div(0, None, "event count", expected.events.len().to_string(), found.events.len().to_string());
    }
    None
}

/// Re-run `spec` and check that it reproduces `log` bitwise.
pub fn replay_check(log: &SimLog, spec: &ScenarioSpec) -> Result<std::result::Result<(), Divergence>> {
    let again = run(spec)?;
    Ok(match first_divergence(log, &again) {
        None => Ok(()),
        Some(d) => Err(d),
    })
}

pub fn write_csv(log: &SimLog, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for step in &log.steps {
        let t = step.t.to_string();
        for r in &step.vehicles {
            let mut row = vec![t.clone()];
            row.extend(r.cells());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready per-vehicle columns: speed, gap, input and energy over time.
pub fn write_series(log: &SimLog, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for info in &log.vehicles {
        let mut w = csv::Writer::from_path(dir.join(format!("vehicle_{:03}.csv", info.uid)))?;
        w.write_record(["t", "d", "v", "gap_ip", "gap_merge", "u", "energy"])?;
        for (t, r) in log.series(info.uid) {
            w.write_record([
                t.to_string(),
                r.d.to_string(),
                r.v.to_string(),
                opt(r.gap_ip),
                opt(r.gap_merge),
                r.u.to_string(),
                r.energy.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{bundled, parse_scenario};

    #[test]
    fn empty_scenario_has_header_only() {
        let spec = parse_scenario(r#"{"name": "empty"}"#).unwrap();
        let log = run(&spec).unwrap();
        assert!(log.steps.is_empty());
        assert!(log.events.is_empty());
        assert_eq!(log.header.config_hash, config_hash(&spec));
    }

    #[test]
    fn timestamps_advance_by_dt() {
        let log = run(&bundled("three_vehicle").unwrap()).unwrap();
        for (k, s) in log.steps.iter().enumerate() {
            assert!((s.t - k as f64 * 0.1).abs() < 1e-9);
            assert_eq!(s.t, (s.t * 1e9).round() / 1e9);
        }
    }

    #[test]
    fn merge_events_are_past_the_merge_point() {
        let log = run(&bundled("three_vehicle").unwrap()).unwrap();
        for e in &log.events {
            if let Event::Merge { t, uid, position } = *e {
                assert!(position > 400.0);
                let k = (t / 0.1).round() as usize;
                let row = log.steps[k].vehicles.iter().find(|r| r.uid == uid).unwrap();
                assert!(row.d > 400.0);
                assert_eq!(row.mode, Mode::Following);
            }
        }
    }

    #[test]
    fn perturbed_log_diverges_at_the_perturbation() {
        let spec = bundled("three_vehicle").unwrap();
        let log = run(&spec).unwrap();
        assert_eq!(replay_check(&log, &spec).unwrap(), Ok(()));
        let mut bad = log.clone();
        bad.steps[57].vehicles[1].v += 1e-12;
        let d = replay_check(&bad, &spec).unwrap().unwrap_err();
        assert_eq!((d.step, d.uid, d.field.as_str()), (57, Some(1), "v"));
    }

    #[test]
    fn csv_header_is_frozen() {
        let log = run(&bundled("three_vehicle").unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_csv(&log, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,uid,id,class,lane,mode,d,v,a,u,theta,power,energy,status,active_set,gap_ip,gap_merge,s1,s2,s3,s4,s5,s6"
        );
    }
}
