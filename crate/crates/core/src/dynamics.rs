//! Longitudinal vehicle dynamics.
//!
//! State is `(d, v)`: path position and speed. The traction force `u` enters
//! through the effective mass `δM`:
//!
//! ```text
//!     d' = v
//!     v' = (u - F_r(v)) / (δ M)
//!     F_r(v) = M g (f_r cos α + sin α) + ½ ρ C_d A v²
//! ```
//!
//! Battery power equals motor power, `P = v u + c' u²` with `c' = c R² / 𝒯²`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Physical and powertrain constants of one (homogeneous) vehicle type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    pub rotational_inertia_coeff: f64,
    /// m/s²
    pub gravity: f64,
    pub rolling_coeff: f64,
    /// rad
    pub road_slope: f64,
    /// kg/m³
    pub air_density: f64,
    pub drag_coeff: f64,
    /// m²
    pub frontal_area: f64,
    /// m
    pub wheel_radius: f64,
    pub transmission_ratio: f64,
    pub motor_param: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1997.0,
            rotational_inertia_coeff: 1.05,
            gravity: 9.81,
            rolling_coeff: 0.012,
            road_slope: 0.0,
            air_density: 1.2,
            drag_coeff: 0.22,
            frontal_area: 2.4,
            wheel_radius: 0.34,
            transmission_ratio: 9.7,
            motor_param: 0.8730,
        }
    }
}

impl VehicleParams {
    /// `δ M`, the mass seen by the traction force.
    pub fn effective_mass(&self) -> f64 {
        self.rotational_inertia_coeff * self.mass
    }

    /// Coefficient of the quadratic loss term in `P = v u + c' u²`.
    pub fn c_prime(&self) -> f64 {
        self.motor_param * self.wheel_radius * self.wheel_radius
            / (self.transmission_ratio * self.transmission_ratio)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vehicle.mass", self.mass),
            ("vehicle.rotational_inertia_coeff", self.rotational_inertia_coeff),
            ("vehicle.gravity", self.gravity),
            ("vehicle.air_density", self.air_density),
            ("vehicle.drag_coeff", self.drag_coeff),
            ("vehicle.frontal_area", self.frontal_area),
            ("vehicle.wheel_radius", self.wheel_radius),
            ("vehicle.transmission_ratio", self.transmission_ratio),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(field, format!("must be > 0, got {value}")));
            }
        }
        let non_negative = [
            ("vehicle.rolling_coeff", self.rolling_coeff),
            ("vehicle.motor_param", self.motor_param),
        ];
        for (field, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(invalid(field, format!("must be >= 0, got {value}")));
            }
        }
        if !self.road_slope.is_finite() {
            return Err(invalid("vehicle.road_slope", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Cav,
    Hdv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lane {
    Main,
    Ramp,
}

/// Lifecycle: `Merging` inside the coordination zone, `Following` after the
/// merge point has been crossed, `Exited` once the downstream run-out is left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Merging,
    Following,
    Exited,
}

impl VehicleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Cav => "cav",
            VehicleClass::Hdv => "hdv",
        }
    }
}

impl Lane {
    pub fn as_str(self) -> &'static str {
        match self {
            Lane::Main => "main",
            Lane::Ramp => "ramp",
        }
    }
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Merging => "merging",
            Mode::Following => "following",
            Mode::Exited => "exited",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Stable index in scenario arrival order; never reassigned.
    pub uid: usize,
    /// Coordinator identity while inside the zone.
    pub id: Option<u32>,
    pub class: VehicleClass,
    pub lane: Lane,
    /// m along own path; 0 at zone entry, `L` at the merge point.
    pub position: f64,
    /// m/s
    pub speed: f64,
    /// Step-average acceleration of the last integrated step, m/s².
    pub last_accel: f64,
    /// Traction force held over the last step, N.
    pub last_input: f64,
    pub mode: Mode,
    pub entry_time: f64,
    pub merge_time: Option<f64>,
    /// Signed cumulative battery energy, J.
    pub energy_used: f64,
}

impl VehicleState {
    pub fn new(uid: usize, class: VehicleClass, lane: Lane, position: f64, speed: f64, t: f64) -> Self {
        Self {
            uid,
            id: None,
            class,
            lane,
            position,
            speed,
            last_accel: 0.0,
            last_input: 0.0,
            mode: Mode::Merging,
            entry_time: t,
            merge_time: None,
            energy_used: 0.0,
        }
    }
}

/// Rolling, grade and aerodynamic resistance at speed `v`.
///
/// Panics on negative speed.
pub fn resistance_force(v: f64, p: &VehicleParams) -> f64 {
    assert!(v >= 0.0, "resistance_force called with negative speed {v}");
    resistance_unchecked(v, p)
}

fn resistance_unchecked(v: f64, p: &VehicleParams) -> f64 {
    let grade = p.mass * p.gravity * (p.rolling_coeff * p.road_slope.cos() + p.road_slope.sin());
    grade + 0.5 * p.air_density * p.drag_coeff * p.frontal_area * v * v
}

/// `(d', v')` of the longitudinal model under traction force `u`.
pub fn state_derivative(v: f64, u: f64, p: &VehicleParams) -> (f64, f64) {
    assert!(v >= 0.0, "state_derivative called with negative speed {v}");
    (v, (u - resistance_force(v, p)) / p.effective_mass())
}

/// Traction force that produces acceleration `a` at speed `v`.
pub fn input_for_accel(a: f64, v: f64, p: &VehicleParams) -> f64 {
    p.effective_mass() * a + resistance_force(v, p)
}

// RK4 stages may dip below zero speed right before a clamp; the vector field
// is evaluated at the floored speed there.
fn field(v: f64, u: f64, p: &VehicleParams) -> (f64, f64) {
    let v = v.max(0.0);
    (v, (u - resistance_unchecked(v, p)) / p.effective_mass())
}

/// One classical RK4 step of `(d, v)` with `u` held. No clamping.
pub fn rk4(d: f64, v: f64, u: f64, dt: f64, p: &VehicleParams) -> (f64, f64) {
    let (k1d, k1v) = field(v, u, p);
    let (k2d, k2v) = field(v + 0.5 * dt * k1v, u, p);
    let (k3d, k3v) = field(v + 0.5 * dt * k2v, u, p);
    let (k4d, k4v) = field(v + dt * k3v, u, p);
    (
        d + dt / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d),
        v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: VehicleState,
    /// Speed would have gone negative and was floored at zero.
    pub speed_clamped: bool,
}

/// Advance `s` by `dt` under the held input `u`.
pub fn integrate_step(s: &VehicleState, u: f64, dt: f64, p: &VehicleParams) -> StepOutcome {
    assert!(dt > 0.0, "integrate_step needs dt > 0, got {dt}");
    let (d, v) = rk4(s.position, s.speed, u, dt, p);
    let speed_clamped = v < 0.0;
    let v = v.max(0.0);
    let mut state = s.clone();
    state.last_accel = (v - s.speed) / dt;
    state.position = d;
    state.speed = v;
    state.last_input = u;
    StepOutcome { state, speed_clamped }
}

/// Motor (= battery) power, W. Negative under regeneration.
pub fn motor_power(v: f64, u: f64, p: &VehicleParams) -> f64 {
    v * u + p.c_prime() * u * u
}

/// Trapezoidal energy increment between two power samples `dt` apart.
pub fn accumulate_energy(prev_power: f64, new_power: f64, dt: f64) -> f64 {
    dt * (prev_power + new_power) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn resistance_at_rest_and_cruise() {
        let p = params();
        assert!((resistance_force(0.0, &p) - 1997.0 * 9.81 * 0.012).abs() < 1e-9);
        assert!((resistance_force(0.0, &p) - 235.08).abs() < 0.01);
        assert!((resistance_force(20.0, &p) - 361.80).abs() < 0.01);
        let flat = VehicleParams { rolling_coeff: 0.0, ..p };
        assert_eq!(resistance_force(0.0, &flat), 0.0);
    }

    #[test]
    #[should_panic]
    fn resistance_rejects_negative_speed() {
        resistance_force(-1.0, &params());
    }

    #[test]
    fn derivative_examples() {
        let p = params();
        let fr = resistance_force(20.0, &p);
        let (dd, dv) = state_derivative(20.0, fr, &p);
        assert_eq!(dd, 20.0);
        assert!(dv.abs() < 1e-15);
        let (_, dv) = state_derivative(20.0, 0.0, &p);
        assert!((dv + fr / (1.05 * 1997.0)).abs() < 1e-15);
        assert!((dv + 0.17254).abs() < 1e-5);
        let flat = VehicleParams { rolling_coeff: 0.0, ..p };
        assert_eq!(state_derivative(0.0, 0.0, &flat), (0.0, 0.0));
    }

    #[test]
    fn c_prime_matches_definition() {
        let p = params();
        let expected = 0.8730 * 0.34 * 0.34 / (9.7 * 9.7);
        assert!((p.c_prime() - expected).abs() <= 1e-12 * expected);
        assert!((p.c_prime() - 1.0726e-3).abs() < 1e-7);
    }

    #[test]
    fn equilibrium_input_holds_speed() {
        let p = params();
        let mut s = VehicleState::new(0, VehicleClass::Cav, Lane::Main, 0.0, 20.0, 0.0);
        let u = resistance_force(20.0, &p);
        let out = integrate_step(&s, u, 0.1, &p);
        assert!((out.state.position - 2.0).abs() < 1e-9);
        assert!((out.state.speed - 20.0).abs() < 1e-9);
        for _ in 0..1000 {
            s = integrate_step(&s, u, 0.1, &p).state;
        }
        assert!((s.speed - 20.0).abs() < 1e-9);
    }

    #[test]
    fn coasting_matches_fine_euler() {
        let p = params();
        let s = VehicleState::new(0, VehicleClass::Cav, Lane::Main, 0.0, 20.0, 0.0);
        let out = integrate_step(&s, 0.0, 0.1, &p);
        // explicit Euler at 1e-5 s
        let (mut d, mut v) = (0.0f64, 20.0f64);
        let h = 1e-5;
        for _ in 0..10_000 {
            let a = -resistance_force(v, &p) / p.effective_mass();
            d += h * v;
            v += h * a;
        }
        assert!((out.state.speed - v).abs() <= 1e-8);
        assert!((out.state.position - d).abs() <= 1e-6);
        assert!((20.0 - out.state.speed - 0.017253).abs() < 5e-6);
    }

    #[test]
    fn tiny_step_leaves_state_unchanged() {
        let p = params();
        let s = VehicleState::new(0, VehicleClass::Cav, Lane::Main, 5.0, 20.0, 0.0);
        let out = integrate_step(&s, 1000.0, 1e-12, &p);
        assert!((out.state.position - 5.0).abs() < 1e-9);
        assert!((out.state.speed - 20.0).abs() < 1e-9);
    }

    #[test]
    fn hard_braking_floors_speed() {
        let p = params();
        let s = VehicleState::new(0, VehicleClass::Hdv, Lane::Main, 0.0, 0.1, 0.0);
        let out = integrate_step(&s, -6000.0, 0.1, &p);
        assert!(out.speed_clamped);
        assert_eq!(out.state.speed, 0.0);
    }

    #[test]
    fn power_examples() {
        let p = params();
        assert_eq!(motor_power(13.0, 0.0, &p), 0.0);
        let cp = p.c_prime();
        assert!((motor_power(20.0, 1000.0, &p) - (20000.0 + cp * 1e6)).abs() < 1e-9);
        assert!((motor_power(20.0, 1000.0, &p) - 21072.6).abs() < 0.1);
        assert!((motor_power(20.0, -1000.0, &p) + 18927.4).abs() < 0.1);
    }

    #[test]
    fn trapezoid_increments() {
        assert!((accumulate_energy(1000.0, 1000.0, 0.1) - 100.0).abs() < 1e-12);
        assert!((accumulate_energy(0.0, 2000.0, 0.1) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_params() {
        assert!(params().validate().is_ok());
        assert!(VehicleParams { mass: 0.0, ..params() }.validate().is_err());
        assert!(VehicleParams { rolling_coeff: -0.1, ..params() }.validate().is_err());
    }
}
