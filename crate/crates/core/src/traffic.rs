//! Human driver models: a scripted sinusoidal lead and the Intelligent
//! Driver Model for everyone else.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// v0, m/s
    pub desired_speed: f64,
    /// T, s
    pub time_headway: f64,
    /// s0, m
    pub min_gap: f64,
    /// a, m/s²
    pub max_accel: f64,
    /// b, m/s²
    pub comfort_decel: f64,
    /// δ
    pub accel_exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 30.0,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            accel_exponent: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("idm.desired_speed", self.desired_speed),
            ("idm.time_headway", self.time_headway),
            ("idm.min_gap", self.min_gap),
            ("idm.max_accel", self.max_accel),
            ("idm.comfort_decel", self.comfort_decel),
            ("idm.accel_exponent", self.accel_exponent),
        ];
        for (field, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(field, format!("must be > 0, got {value}")));
            }
        }
        Ok(())
    }

    fn free_term(&self, v: f64) -> f64 {
        1.0 - (v / self.desired_speed).powf(self.accel_exponent)
    }

    /// Desired dynamic gap `s*(v, Δv)`.
    pub fn desired_gap(&self, v: f64, v_lead: f64) -> f64 {
        let dv = v - v_lead;
        self.min_gap
            + v * self.time_headway
            + v * dv / (2.0 * (self.max_accel * self.comfort_decel).sqrt())
    }
}

/// The gap to the leader has closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapCollapsed {
    pub gap: f64,
}

/// Unclamped IDM acceleration towards a leader `gap` metres ahead.
pub fn idm_raw(gap: f64, v: f64, v_lead: f64, p: &IdmParams) -> std::result::Result<f64, GapCollapsed> {
    if !(gap > 0.0) {
        return Err(GapCollapsed { gap });
    }
    let ratio = p.desired_gap(v, v_lead) / gap;
    Ok(p.max_accel * (p.free_term(v) - ratio * ratio))
}

/// IDM acceleration clamped to `[a_min, a_max]`.
pub fn idm_accel(
    gap: f64,
    v: f64,
    v_lead: f64,
    p: &IdmParams,
    a_min: f64,
    a_max: f64,
) -> std::result::Result<f64, GapCollapsed> {
    idm_raw(gap, v, v_lead, p).map(|a| a.clamp(a_min, a_max))
}

/// Free-road IDM acceleration, clamped.
pub fn idm_free(v: f64, p: &IdmParams, a_min: f64, a_max: f64) -> f64 {
    (p.max_accel * p.free_term(v)).clamp(a_min, a_max)
}

/// Scripted lead trajectory
///
/// ```text
///     v(t) = v̄ - A sin(π t / T)
///     d(t) = d₀ + v̄ t + (A T / π)(cos(π t / T) - 1)
/// ```
///
/// The defaults give `d₀ = 97`, `v̄ = 20`, `A = 0.8`, `T = 10`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeadScript {
    pub initial_position: f64,
    pub base_speed: f64,
    pub amplitude: f64,
    pub half_period: f64,
}

impl Default for LeadScript {
    fn default() -> Self {
        Self {
            initial_position: 97.0,
            base_speed: 20.0,
            amplitude: 0.8,
            half_period: 10.0,
        }
    }
}

impl LeadScript {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_period > 0.0) {
            return Err(invalid("lead_script.half_period", "must be > 0"));
        }
        if !(self.amplitude >= 0.0 && self.amplitude <= self.base_speed) {
            return Err(invalid("lead_script.amplitude", "need 0 <= amplitude <= base_speed"));
        }
        if !self.initial_position.is_finite() {
            return Err(invalid("lead_script.initial_position", "must be finite"));
        }
        Ok(())
    }

    /// `(d, v)` at time `t` measured from scenario start.
    pub fn lead_state(&self, t: f64) -> (f64, f64) {
        let w = PI / self.half_period;
        let d = self.initial_position
            + self.base_speed * t
            + self.amplitude / w * ((w * t).cos() - 1.0);
        let v = self.base_speed - self.amplitude * (w * t).sin();
        (d, v)
    }

    pub fn lead_accel(&self, t: f64) -> f64 {
        let w = PI / self.half_period;
        -self.amplitude * w * (w * t).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lead_initial_state() {
        let s = LeadScript::default();
        let (d, v) = s.lead_state(0.0);
        assert!((d - 97.0).abs() < 1e-12);
        assert!((v - 20.0).abs() < 1e-12);
    }

    #[test]
    fn lead_at_five_seconds() {
        let (d, v) = LeadScript::default().lead_state(5.0);
        assert!((v - 19.2).abs() < 1e-12);
        assert!((d - (197.0 - 8.0 / PI)).abs() < 1e-9);
        assert!((d - 194.454).abs() < 1e-3);
    }

    #[test]
    fn default_script_is_the_printed_trajectory() {
        let s = LeadScript::default();
        for k in 0..50 {
            let t = k as f64 * 0.7;
            let (d, v) = s.lead_state(t);
            let d_ref = 97.0 + 20.0 * t + 8.0 / PI * (PI * t / 10.0).cos() - 8.0 / PI;
            let v_ref = 20.0 - 0.8 * (PI * t / 10.0).sin();
            assert!((d - d_ref).abs() < 1e-9);
            assert!((v - v_ref).abs() < 1e-12);
        }
    }

    #[test]
    fn idm_equilibria() {
        let p = IdmParams::default();
        let a = idm_raw(1e9, p.desired_speed, p.desired_speed, &p).unwrap();
        assert!(a.abs() < 1e-9);
        let a = idm_raw(p.min_gap, 0.0, 0.0, &p).unwrap();
        assert!(a.abs() < 1e-12);
    }

    #[test]
    fn idm_regression_value() {
        // s* = 2 + 30 = 32; a = 1.5 (1 - (2/3)^4 - (32/50)^2)
        let p = IdmParams::default();
        let a = idm_accel(50.0, 20.0, 20.0, &p, -3.0, 3.0).unwrap();
        let expected = 1.5 * (1.0 - (2.0f64 / 3.0).powi(4) - 0.64f64 * 0.64);
        assert!((a - expected).abs() < 1e-12);
        assert!((a - 0.589_303_7).abs() < 1e-6);
    }

    #[test]
    fn idm_collapsed_gap() {
        let p = IdmParams::default();
        assert!(idm_accel(0.0, 10.0, 10.0, &p, -3.0, 3.0).is_err());
        assert!(idm_accel(-1.0, 10.0, 10.0, &p, -3.0, 3.0).is_err());
    }

    #[test]
    fn idm_clamps() {
        let p = IdmParams::default();
        assert_eq!(idm_accel(1.0, 30.0, 0.0, &p, -3.0, 3.0).unwrap(), -3.0);
    }
}
