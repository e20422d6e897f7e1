use proptest::prelude::*;

use onramp::dynamics::{integrate_step, motor_power, resistance_force};
use onramp::{Lane, VehicleClass, VehicleParams, VehicleState};

proptest! {
    #[test]
    fn resistance_is_monotone(a in 0.0..60.0f64, b in 0.0..60.0f64) {
        let p = VehicleParams::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(resistance_force(lo, &p) <= resistance_force(hi, &p));
        if lo < hi {
            prop_assert!(resistance_force(lo, &p) < resistance_force(hi, &p));
        }
    }

    #[test]
    fn equilibrium_input_holds_speed(v0 in 0.0..40.0f64) {
        let p = VehicleParams::default();
        let mut s = VehicleState::new(0, VehicleClass::Cav, Lane::Main, 0.0, v0, 0.0);
        for _ in 0..1000 {
            let u = resistance_force(s.speed, &p);
            s = integrate_step(&s, u, 0.1, &p).state;
        }
        prop_assert!((s.speed - v0).abs() <= 1e-9);
    }

    #[test]
    fn loss_term_is_even(v in 0.0..40.0f64, u in -2e4..2e4f64) {
        let p = VehicleParams::default();
        let diff = motor_power(v, u, &p) - motor_power(v, -u, &p);
        prop_assert!((diff - 2.0 * v * u).abs() <= 1e-9 * (1.0 + (2.0 * v * u).abs()));
    }
}
