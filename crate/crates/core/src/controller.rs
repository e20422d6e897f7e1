//! Per-CAV assembly of the CBF/CLF QP from a frozen snapshot.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::barriers::{
    cbf_row, clf_row, input_bound_rows, slack_floor_row, ConstraintTag, ControllerConfig,
    LinearConstraint, NeighborView,
};
use crate::coordination::CoordinatorState;
use crate::dynamics::{resistance_force, Mode, VehicleParams, VehicleState};
use crate::error::Result;
use crate::qp::{self, QpProblem, QpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionStatus {
    Optimal,
    FallbackBrake,
}

impl DecisionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionStatus::Optimal => "OPTIMAL",
            DecisionStatus::FallbackBrake => "FALLBACK_BRAKE",
        }
    }
}

/// Which vehicles (by uid) the ego's gap constraints refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NeighborRefs {
    /// Vehicle physically ahead on the ego's path; drives S5/S6.
    pub follow: Option<usize>,
    /// FIFO predecessor on the other road; drives S3/S4 while merging.
    pub merge: Option<usize>,
}

/// A barrier found at or past its boundary while assembling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub tag: ConstraintTag,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub problem: QpProblem,
    pub neighbors: NeighborRefs,
    /// S1..S6 at the snapshot, `None` where the row was not assembled.
    pub barrier_values: [Option<f64>; 6],
    pub violations: Vec<ViolationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision {
    pub u: f64,
    pub theta: f64,
    pub status: DecisionStatus,
    pub active_set: Vec<ConstraintTag>,
    /// Wall clock, s. Not part of any determinism comparison.
    pub solve_time: f64,
}

fn find(snapshot: &[VehicleState], uid: usize) -> Option<&VehicleState> {
    snapshot.iter().find(|s| s.uid == uid)
}

/// Nearest vehicle past the merge point that is strictly ahead of `d`.
pub fn nearest_downstream(snapshot: &[VehicleState], d: f64) -> Option<&VehicleState> {
    snapshot
        .iter()
        .filter(|s| s.mode != Mode::Merging && s.position > d)
        .min_by(|a, b| a.position.total_cmp(&b.position).then(a.uid.cmp(&b.uid)))
}

/// Resolve the follow and merge references of `ego`.
///
/// Inside the zone the coordinator decides. Where it names no same-lane
/// predecessor or no merge predecessor, the nearest vehicle already past the
/// merge point fills the gap: as the follow reference when it came from the
/// ego's own road, as the merge reference otherwise. Each pairing keeps the
/// role it held before the leading vehicle crossed, so no barrier jumps at
/// that instant. Past the merge point only the vehicle physically ahead matters.
pub fn resolve_neighbors(
    ego: &VehicleState,
    snapshot: &[VehicleState],
    coord: &CoordinatorState,
) -> Result<NeighborRefs> {
    if ego.mode != Mode::Merging {
        return Ok(NeighborRefs {
            follow: nearest_downstream(snapshot, ego.position).map(|s| s.uid),
            merge: None,
        });
    }
    let id = match ego.id {
        Some(id) => id,
        None => coord.id_of(ego.uid).ok_or(crate::error::Error::UnknownId(0))?,
    };
    let preds = coord.predecessors(id)?;
    let uid_of = |k: u32| coord.entry(k).map(|e| e.uid);
    let downstream = nearest_downstream(snapshot, f64::NEG_INFINITY);
    let same_road = downstream.filter(|s| s.lane == ego.lane).map(|s| s.uid);
    let other_road = downstream.filter(|s| s.lane != ego.lane).map(|s| s.uid);
    let follow = match preds.ip {
        Some(k) => Some(uid_of(k)?),
        None => same_road,
    };
    let merge = match preds.merge_pred {
        Some(k) => Some(uid_of(k)?),
        None if follow.is_none() => other_road,
        None => None,
    };
    Ok(NeighborRefs { follow, merge })
}

fn view(ego: &VehicleState, other: &VehicleState, cfg: &ControllerConfig) -> NeighborView {
    NeighborView {
        gap: other.position - ego.position,
        speed: other.speed,
        accel: if cfg.neighbor_accel_feedforward { other.last_accel } else { 0.0 },
    }
}

/// Build the QP for `ego` against the frozen `snapshot`.
pub fn assemble(
    ego: &VehicleState,
    snapshot: &[VehicleState],
    coord: &CoordinatorState,
    cfg: &ControllerConfig,
    p: &VehicleParams,
) -> Result<Assembly> {
    let neighbors = resolve_neighbors(ego, snapshot, coord)?;
    let mut rows: Vec<LinearConstraint> = Vec::with_capacity(10);
    let mut barrier_values = [None; 6];
    let mut violations = Vec::new();

    let mut push = |tag: ConstraintTag, nb: Option<&NeighborView>, rows: &mut Vec<LinearConstraint>| -> Result<()> {
        let row = match cbf_row(tag, ego, nb, cfg, p)? {
            Ok(row) => {
                barrier_values[tag.barrier_index().expect("barrier")] = Some(row_value(tag, ego, nb, cfg)?);
                row
            }
            Err(v) => {
                barrier_values[tag.barrier_index().expect("barrier")] = Some(v.value);
                violations.push(ViolationRecord { tag, value: v.value });
                v.clamped_row
            }
        };
        rows.push(row);
        Ok(())
    };

    push(ConstraintTag::MaxSpeed, None, &mut rows)?;
    push(ConstraintTag::MinSpeed, None, &mut rows)?;
    if let Some(other) = neighbors.follow.and_then(|uid| find(snapshot, uid)) {
        let nb = view(ego, other, cfg);
        push(ConstraintTag::FollowHeadway, Some(&nb), &mut rows)?;
        push(ConstraintTag::FollowBrake, Some(&nb), &mut rows)?;
    }
    if ego.mode == Mode::Merging {
        if let Some(other) = neighbors.merge.and_then(|uid| find(snapshot, uid)) {
            let nb = view(ego, other, cfg);
            push(ConstraintTag::MergeHeadway, Some(&nb), &mut rows)?;
            push(ConstraintTag::MergeBrake, Some(&nb), &mut rows)?;
        }
    }
    rows.push(clf_row(ego, cfg, p));
    let (upper, lower) = input_bound_rows(ego, cfg, p);
    rows.push(upper);
    rows.push(lower);
    if cfg.slack_nonnegative {
        rows.push(slack_floor_row());
    }

    let problem = QpProblem::new(
        [2.0 * p.c_prime(), 2.0 * cfg.slack_weight],
        [ego.speed, 0.0],
        rows,
    );
    Ok(Assembly {
        problem,
        neighbors,
        barrier_values,
        violations,
    })
}

fn row_value(tag: ConstraintTag, ego: &VehicleState, nb: Option<&NeighborView>, cfg: &ControllerConfig) -> Result<f64> {
    crate::barriers::barrier_value(tag, ego, nb, cfg)
}

/// Maximum braking, the lower input bound.
pub fn fallback_input(ego: &VehicleState, cfg: &ControllerConfig, p: &VehicleParams) -> f64 {
    p.effective_mass() * cfg.a_min + resistance_force(ego.speed, p)
}

/// Solve an assembled problem, braking at the lower input bound when it is infeasible.
pub fn decide_assembled(ego: &VehicleState, asm: &Assembly, cfg: &ControllerConfig, p: &VehicleParams) -> ControlDecision {
    let start = Instant::now();
    let sol = qp::solve(&asm.problem);
    let solve_time = start.elapsed().as_secs_f64();
    match sol.status {
        QpStatus::Optimal => ControlDecision {
            u: sol.u_star,
            theta: sol.theta_star,
            status: DecisionStatus::Optimal,
            active_set: sol.active_tags(),
            solve_time,
        },
        QpStatus::Infeasible => ControlDecision {
            u: fallback_input(ego, cfg, p),
            theta: 0.0,
            status: DecisionStatus::FallbackBrake,
            active_set: Vec::new(),
            solve_time,
        },
    }
}

pub fn decide(
    ego: &VehicleState,
    snapshot: &[VehicleState],
    coord: &CoordinatorState,
    cfg: &ControllerConfig,
    p: &VehicleParams,
) -> Result<ControlDecision> {
    let asm = assemble(ego, snapshot, coord, cfg, p)?;
    Ok(decide_assembled(ego, &asm, cfg, p))
}
