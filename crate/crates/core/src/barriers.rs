//! Barrier, Lyapunov and actuation constraints as affine rows over `q = (u, θ)`.
//!
//! Every safety function `S` has a reciprocal barrier `B = 1/S`. Requiring
//! `dB/dt <= γ / B` is the same as `dS/dt >= -γ S³`, which keeps `S >= 0`
//! forward invariant. Since `S` depends on the ego state `(d, v)` and on the
//! gap `z` to a neighbor whose speed is frozen over the sampling interval,
//!
//! ```text
//!     dS/dt = ∂S/∂d · v + ∂S/∂v · (u - F_r) / (δM) + ∂S/∂z · (v_other - v)
//! ```
//!
//! is affine in `u`, and each condition becomes one row `a_u u + a_θ θ <= b`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{resistance_force, VehicleParams, VehicleState};
use crate::error::{invalid, Error, Result};

/// Controller tuning plus the comfort and speed limits it enforces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// φ, s
    pub time_headway: f64,
    /// l, m
    pub min_gap: f64,
    /// L, m. Distance over which the merging headway ramps from 0 to φ.
    pub headway_ramp_length: f64,
    /// ε, 1/s
    pub clf_rate: f64,
    /// ω, weight on θ² in the QP
    pub slack_weight: f64,
    /// w, linear travel-time penalty. Carried for completeness; not part of the QP.
    pub travel_time_penalty: f64,
    /// γ
    pub cbf_gamma: f64,
    /// m/s², negative
    pub a_min: f64,
    /// m/s², positive
    pub a_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// v_d, m/s
    pub v_des: f64,
    /// Δt, s
    pub sample_dt: f64,
    /// Adds a `θ >= 0` row to every problem.
    pub slack_nonnegative: bool,
    /// Feed each neighbor's acceleration into the gap-barrier rates instead
    /// of holding its speed constant. The simulator supplies the acceleration
    /// planned for the current interval.
    pub neighbor_accel_feedforward: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            time_headway: 1.8,
            min_gap: 0.0,
            headway_ramp_length: 400.0,
            clf_rate: 10.0,
            slack_weight: 10.0,
            travel_time_penalty: 0.0,
            cbf_gamma: 1.0,
            a_min: -3.0,
            a_max: 3.0,
            v_min: 0.0,
            v_max: 33.0,
            v_des: 30.0,
            sample_dt: 0.1,
            slack_nonnegative: false,
            neighbor_accel_feedforward: true,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.time_headway,
            self.min_gap,
            self.headway_ramp_length,
            self.clf_rate,
            self.slack_weight,
            self.travel_time_penalty,
            self.cbf_gamma,
            self.a_min,
            self.a_max,
            self.v_min,
            self.v_max,
            self.v_des,
            self.sample_dt,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !all_finite {
            return Err(invalid("controller", "all values must be finite"));
        }
        if !(self.a_min < 0.0) {
            return Err(invalid("controller.a_min", "must be < 0"));
        }
        if !(self.a_max > 0.0) {
            return Err(invalid("controller.a_max", "must be > 0"));
        }
        if !(0.0 <= self.v_min && self.v_min < self.v_des && self.v_des <= self.v_max) {
            return Err(invalid("controller.v_des", "need 0 <= v_min < v_des <= v_max"));
        }
        let positive = [
            ("controller.time_headway", self.time_headway),
            ("controller.headway_ramp_length", self.headway_ramp_length),
            ("controller.clf_rate", self.clf_rate),
            ("controller.slack_weight", self.slack_weight),
            ("controller.cbf_gamma", self.cbf_gamma),
            ("controller.sample_dt", self.sample_dt),
        ];
        for (field, value) in positive {
            if !(value > 0.0) {
                return Err(invalid(field, format!("must be > 0, got {value}")));
            }
        }
        if self.min_gap < 0.0 {
            return Err(invalid("controller.min_gap", "must be >= 0"));
        }
        Ok(())
    }

    /// Time-varying merging headway `Φ(d) = φ d / L`.
    pub fn merge_headway(&self, position: f64) -> f64 {
        self.time_headway * position / self.headway_ramp_length
    }
}

/// Row identity. The declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ConstraintTag {
    MaxSpeed,
    MinSpeed,
    MergeHeadway,
    MergeBrake,
    FollowHeadway,
    FollowBrake,
    Clf,
    InputMax,
    InputMin,
    SlackFloor,
}

impl ConstraintTag {
    /// The six safety functions, in `S1..S6` order.
    pub const BARRIERS: [ConstraintTag; 6] = [
        ConstraintTag::MaxSpeed,
        ConstraintTag::MinSpeed,
        ConstraintTag::MergeHeadway,
        ConstraintTag::MergeBrake,
        ConstraintTag::FollowHeadway,
        ConstraintTag::FollowBrake,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintTag::MaxSpeed => "MAX_SPEED",
            ConstraintTag::MinSpeed => "MIN_SPEED",
            ConstraintTag::MergeHeadway => "MERGE_HEADWAY",
            ConstraintTag::MergeBrake => "MERGE_BRAKE",
            ConstraintTag::FollowHeadway => "FOLLOW_HEADWAY",
            ConstraintTag::FollowBrake => "FOLLOW_BRAKE",
            ConstraintTag::Clf => "CLF",
            ConstraintTag::InputMax => "INPUT_MAX",
            ConstraintTag::InputMin => "INPUT_MIN",
            ConstraintTag::SlackFloor => "SLACK_FLOOR",
        }
    }

    /// Index into `S1..S6`, if this tag is a safety barrier.
    pub fn barrier_index(self) -> Option<usize> {
        Self::BARRIERS.iter().position(|t| *t == self)
    }

    pub fn needs_neighbor(self) -> bool {
        matches!(
            self,
            ConstraintTag::MergeHeadway
                | ConstraintTag::MergeBrake
                | ConstraintTag::FollowHeadway
                | ConstraintTag::FollowBrake
        )
    }
}

/// `coeff_u · u + coeff_theta · θ <= bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeff_u: f64,
    pub coeff_theta: f64,
    pub bound: f64,
    pub tag: ConstraintTag,
}

impl LinearConstraint {
    pub fn new(coeff_u: f64, coeff_theta: f64, bound: f64, tag: ConstraintTag) -> Self {
        Self {
            coeff_u,
            coeff_theta,
            bound,
            tag,
        }
    }

    pub fn scale(&self) -> f64 {
        self.coeff_u.abs().max(self.coeff_theta.abs()).max(1.0)
    }

    /// `lhs - bound`, divided by the row scale. Positive means violated.
    pub fn normalized_violation(&self, u: f64, theta: f64) -> f64 {
        (self.coeff_u * u + self.coeff_theta * theta - self.bound) / self.scale()
    }

    pub fn is_finite(&self) -> bool {
        self.coeff_u.is_finite() && self.coeff_theta.is_finite() && self.bound.is_finite()
    }
}

/// Gap, speed and measured acceleration of the vehicle a gap barrier is
/// measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborView {
    /// Neighbor position minus ego position, m.
    pub gap: f64,
    pub speed: f64,
    /// Enters `dS/dt` through `∂S/∂v_other`; zero freezes the neighbor's speed.
    pub accel: f64,
}

impl NeighborView {
    /// A neighbor holding its speed over the interval.
    pub fn frozen(gap: f64, speed: f64) -> Self {
        Self { gap, speed, accel: 0.0 }
    }
}

/// Partial derivatives of one safety function at the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierGradient {
    pub d_position: f64,
    pub d_speed: f64,
    pub d_gap: f64,
    /// Against the neighbor speed; not used in rows, since that speed is frozen.
    pub d_other_speed: f64,
}

/// `dS/dt = drift + input_coeff · u` under the frozen-neighbor flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierRate {
    pub value: f64,
    pub drift: f64,
    pub input_coeff: f64,
}

fn neighbor(tag: ConstraintTag, nb: Option<&NeighborView>) -> Result<NeighborView> {
    nb.copied().ok_or(Error::MissingNeighbor(tag))
}

/// Evaluate safety function `tag` at the current state.
pub fn barrier_value(
    tag: ConstraintTag,
    ego: &VehicleState,
    nb: Option<&NeighborView>,
    cfg: &ControllerConfig,
) -> Result<f64> {
    barrier_at(tag, ego.position, ego.speed, nb, cfg)
}

/// Same as [`barrier_value`] on a raw `(d, v)` pair.
pub fn barrier_at(
    tag: ConstraintTag,
    d: f64,
    v: f64,
    nb: Option<&NeighborView>,
    cfg: &ControllerConfig,
) -> Result<f64> {
    let l = cfg.min_gap;
    let phi = cfg.time_headway;
    let k = phi / cfg.headway_ramp_length;
    let a = cfg.a_min;
    Ok(match tag {
        ConstraintTag::MaxSpeed => cfg.v_max - v,
        ConstraintTag::MinSpeed => v - cfg.v_min,
        ConstraintTag::MergeHeadway => {
            let nb = neighbor(tag, nb)?;
            nb.gap - l - cfg.merge_headway(d) * nb.speed
        }
        ConstraintTag::MergeBrake => {
            let nb = neighbor(tag, nb)?;
            let rel = nb.speed - v;
            let shifted = d - (v * v - nb.speed * nb.speed) / (2.0 * a);
            nb.gap + rel * rel / (2.0 * a) - l - k * shifted * v
        }
        ConstraintTag::FollowHeadway => {
            let nb = neighbor(tag, nb)?;
            nb.gap - l - phi * nb.speed
        }
        ConstraintTag::FollowBrake => {
            let nb = neighbor(tag, nb)?;
            let rel = nb.speed - v;
            nb.gap + rel * rel / (2.0 * a) - phi * v - l
        }
        ConstraintTag::Clf | ConstraintTag::InputMax | ConstraintTag::InputMin | ConstraintTag::SlackFloor => {
            return Err(invalid("tag", format!("{tag:?} is not a safety barrier")))
        }
    })
}

/// Analytic partials of safety function `tag` at `(d, v)`.
pub fn barrier_gradient(
    tag: ConstraintTag,
    d: f64,
    v: f64,
    nb: Option<&NeighborView>,
    cfg: &ControllerConfig,
) -> Result<BarrierGradient> {
    let phi = cfg.time_headway;
    let k = phi / cfg.headway_ramp_length;
    let a = cfg.a_min;
    let zero = BarrierGradient {
        d_position: 0.0,
        d_speed: 0.0,
        d_gap: 0.0,
        d_other_speed: 0.0,
    };
    Ok(match tag {
        ConstraintTag::MaxSpeed => BarrierGradient { d_speed: -1.0, ..zero },
        ConstraintTag::MinSpeed => BarrierGradient { d_speed: 1.0, ..zero },
        ConstraintTag::MergeHeadway => {
            let nb = neighbor(tag, nb)?;
            BarrierGradient {
                d_position: -k * nb.speed,
                d_gap: 1.0,
                d_other_speed: -k * d,
                ..zero
            }
        }
        ConstraintTag::MergeBrake => {
            let nb = neighbor(tag, nb)?;
            let rel = nb.speed - v;
            let shifted = d - (v * v - nb.speed * nb.speed) / (2.0 * a);
            BarrierGradient {
                d_position: -k * v,
                d_speed: -rel / a - k * (shifted - v * v / a),
                d_gap: 1.0,
                d_other_speed: rel / a - k * v * nb.speed / a,
            }
        }
        ConstraintTag::FollowHeadway => {
            let _ = neighbor(tag, nb)?;
            BarrierGradient {
                d_gap: 1.0,
                d_other_speed: -phi,
                ..zero
            }
        }
        ConstraintTag::FollowBrake => {
            let nb = neighbor(tag, nb)?;
            let rel = nb.speed - v;
            BarrierGradient {
                d_speed: -rel / a - phi,
                d_gap: 1.0,
                d_other_speed: rel / a,
                ..zero
            }
        }
        _ => return Err(invalid("tag", format!("{tag:?} is not a safety barrier"))),
    })
}

/// Split `dS/dt` into input-free drift and the coefficient on `u`.
pub fn barrier_rate(
    tag: ConstraintTag,
    ego: &VehicleState,
    nb: Option<&NeighborView>,
    cfg: &ControllerConfig,
    p: &VehicleParams,
) -> Result<BarrierRate> {
    let (d, v) = (ego.position, ego.speed);
    let value = barrier_at(tag, d, v, nb, cfg)?;
    let g = barrier_gradient(tag, d, v, nb, cfg)?;
    let m = p.effective_mass();
    let (closing, other_accel) = nb.map_or((0.0, 0.0), |nb| (nb.speed - v, nb.accel));
    let drift = g.d_position * v - g.d_speed * resistance_force(v, p) / m
        + g.d_gap * closing
        + g.d_other_speed * other_accel;
    Ok(BarrierRate {
        value,
        drift,
        input_coeff: g.d_speed / m,
    })
}

/// A barrier that is already at or past its boundary. `clamped_row` is the
/// row rebuilt with `S` replaced by [`VIOLATION_CLAMP`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierViolation {
    pub tag: ConstraintTag,
    pub value: f64,
    pub clamped_row: LinearConstraint,
}

pub const VIOLATION_CLAMP: f64 = 1e-6;

fn row_from_rate(tag: ConstraintTag, rate: &BarrierRate, s: f64, gamma: f64) -> LinearConstraint {
    LinearConstraint::new(-rate.input_coeff, 0.0, rate.drift + gamma * s * s * s, tag)
}

/// Reciprocal-barrier row `-input_coeff · u <= drift + γ S³`.
///
/// Fails with [`BarrierViolation`] when `S <= 0`.
pub fn cbf_row(
    tag: ConstraintTag,
    ego: &VehicleState,
    nb: Option<&NeighborView>,
    cfg: &ControllerConfig,
    p: &VehicleParams,
) -> Result<std::result::Result<LinearConstraint, BarrierViolation>> {
    let rate = barrier_rate(tag, ego, nb, cfg, p)?;
    if rate.value > 0.0 {
        Ok(Ok(row_from_rate(tag, &rate, rate.value, cfg.cbf_gamma)))
    } else {
        Ok(Err(BarrierViolation {
            tag,
            value: rate.value,
            clamped_row: row_from_rate(tag, &rate, VIOLATION_CLAMP, cfg.cbf_gamma),
        }))
    }
}

/// Soft speed-tracking row for `V = (v - v_d)²`:
/// `dV/dt + ε V <= θ`.
pub fn clf_row(ego: &VehicleState, cfg: &ControllerConfig, p: &VehicleParams) -> LinearConstraint {
    let err = ego.speed - cfg.v_des;
    let gain = 2.0 * err / p.effective_mass();
    LinearConstraint::new(
        gain,
        -1.0,
        gain * resistance_force(ego.speed, p) - cfg.clf_rate * err * err,
        ConstraintTag::Clf,
    )
}

/// `δM a_min + F_r <= u <= δM a_max + F_r` as two rows.
pub fn input_bound_rows(
    ego: &VehicleState,
    cfg: &ControllerConfig,
    p: &VehicleParams,
) -> (LinearConstraint, LinearConstraint) {
    let fr = resistance_force(ego.speed, p);
    let m = p.effective_mass();
    (
        LinearConstraint::new(1.0, 0.0, m * cfg.a_max + fr, ConstraintTag::InputMax),
        LinearConstraint::new(-1.0, 0.0, -(m * cfg.a_min + fr), ConstraintTag::InputMin),
    )
}

pub fn slack_floor_row() -> LinearConstraint {
    LinearConstraint::new(0.0, -1.0, 0.0, ConstraintTag::SlackFloor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Lane, VehicleClass};

    fn ego(d: f64, v: f64) -> VehicleState {
        VehicleState::new(0, VehicleClass::Cav, Lane::Ramp, d, v, 0.0)
    }

    #[test]
    fn max_speed_value() {
        let cfg = ControllerConfig::default();
        assert_eq!(barrier_value(ConstraintTag::MaxSpeed, &ego(0.0, 20.0), None, &cfg).unwrap(), 13.0);
    }

    #[test]
    fn headway_ramp_endpoints() {
        let cfg = ControllerConfig::default();
        assert_eq!(cfg.merge_headway(0.0), 0.0);
        assert_eq!(cfg.merge_headway(cfg.headway_ramp_length), cfg.time_headway);
    }

    #[test]
    fn follow_brake_equal_speeds() {
        let cfg = ControllerConfig::default();
        let nb = NeighborView::frozen(50.0, 20.0);
        let s6 = barrier_value(ConstraintTag::FollowBrake, &ego(0.0, 20.0), Some(&nb), &cfg).unwrap();
        assert!((s6 - 14.0).abs() < 1e-12);
    }

    #[test]
    fn braking_terms_vanish_at_zero_relative_speed() {
        let cfg = ControllerConfig::default();
        let nb = NeighborView::frozen(80.0, 22.0);
        let e = ego(150.0, 22.0);
        let s3 = barrier_value(ConstraintTag::MergeHeadway, &e, Some(&nb), &cfg).unwrap();
        let s4 = barrier_value(ConstraintTag::MergeBrake, &e, Some(&nb), &cfg).unwrap();
        let s5 = barrier_value(ConstraintTag::FollowHeadway, &e, Some(&nb), &cfg).unwrap();
        let s6 = barrier_value(ConstraintTag::FollowBrake, &e, Some(&nb), &cfg).unwrap();
        assert_eq!(s3, s4);
        assert_eq!(s5, s6);
    }

    #[test]
    fn gap_barrier_needs_neighbor() {
        let cfg = ControllerConfig::default();
        let err = barrier_value(ConstraintTag::FollowBrake, &ego(0.0, 20.0), None, &cfg).unwrap_err();
        assert!(matches!(err, Error::MissingNeighbor(ConstraintTag::FollowBrake)));
    }

    #[test]
    fn max_speed_row_example() {
        let cfg = ControllerConfig::default();
        let p = VehicleParams::default();
        let row = cbf_row(ConstraintTag::MaxSpeed, &ego(0.0, 25.0), None, &cfg, &p)
            .unwrap()
            .unwrap();
        let m = p.effective_mass();
        // u <= F_r(25) + 512 δM after multiplying through by δM
        let u_max = row.bound / row.coeff_u;
        let expected = resistance_force(25.0, &p) + 512.0 * m;
        assert!((u_max - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn follow_headway_row_has_no_input() {
        let cfg = ControllerConfig::default();
        let p = VehicleParams::default();
        let nb = NeighborView::frozen(60.0, 18.0);
        let row = cbf_row(ConstraintTag::FollowHeadway, &ego(10.0, 21.0), Some(&nb), &cfg, &p)
            .unwrap()
            .unwrap();
        assert_eq!(row.coeff_u, 0.0);
        let s5 = 60.0 - 1.8 * 18.0;
        assert!((row.bound - ((18.0 - 21.0) + s5 * s5 * s5)).abs() < 1e-9);
    }

    #[test]
    fn violated_barrier_reports_clamped_row() {
        let cfg = ControllerConfig::default();
        let p = VehicleParams::default();
        let nb = NeighborView::frozen(10.0, 20.0);
        let out = cbf_row(ConstraintTag::FollowHeadway, &ego(0.0, 20.0), Some(&nb), &cfg, &p).unwrap();
        let v = out.unwrap_err();
        assert!(v.value < 0.0);
        assert!((v.clamped_row.bound - 1e-18).abs() < 1e-12);
    }

    #[test]
    fn clf_rows() {
        let cfg = ControllerConfig::default();
        let p = VehicleParams::default();
        let at_target = clf_row(&ego(0.0, 30.0), &cfg, &p);
        assert_eq!((at_target.coeff_u, at_target.coeff_theta, at_target.bound), (0.0, -1.0, 0.0));

        let row = clf_row(&ego(0.0, 29.0), &cfg, &p);
        let cu = -2.0 / p.effective_mass();
        assert!((row.coeff_u - cu).abs() < 1e-15);
        assert!((row.coeff_u + 9.539e-4).abs() < 1e-6);
        assert!((row.bound - (cu * resistance_force(29.0, &p) - 10.0)).abs() < 1e-12);
    }

    #[test]
    fn input_bounds() {
        let cfg = ControllerConfig::default();
        let p = VehicleParams::default();
        let (hi, lo) = input_bound_rows(&ego(0.0, 20.0), &cfg, &p);
        assert!((hi.bound - 6652.35).abs() < 0.01);
        assert!((-lo.bound + 5928.75).abs() < 0.01);
        let flat = ControllerConfig { a_min: -0.0, a_max: 0.0, ..cfg };
        let (hi, lo) = input_bound_rows(&ego(0.0, 20.0), &flat, &p);
        assert_eq!(hi.bound, -lo.bound);
    }
}
