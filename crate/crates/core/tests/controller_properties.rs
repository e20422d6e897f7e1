use proptest::prelude::*;

use onramp::controller::{assemble, decide, decide_assembled};
use onramp::dynamics::{input_for_accel, resistance_force};
use onramp::scenario::random_scenario;
use onramp::{
    run, ControllerConfig, CoordinatorState, DecisionStatus, Lane, Mode, VehicleClass, VehicleParams, VehicleState,
};

/// An HDV ahead on the main road and a CAV behind it on either road.
fn pair(ramp: bool, d: f64, v: f64, gap: f64, v_o: f64, a_o: f64) -> (Vec<VehicleState>, CoordinatorState) {
    let mut coord = CoordinatorState::new(400.0);
    let mut hdv = VehicleState::new(0, VehicleClass::Hdv, Lane::Main, d + gap, v_o, 0.0);
    hdv.last_accel = a_o;
    hdv.id = Some(coord.register(0, Lane::Main, VehicleClass::Hdv));
    let lane = if ramp { Lane::Ramp } else { Lane::Main };
    let mut cav = VehicleState::new(1, VehicleClass::Cav, lane, d, v, 0.0);
    cav.id = Some(coord.register(1, lane, VehicleClass::Cav));
    (vec![hdv, cav], coord)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn decisions_satisfy_their_rows(
        ramp in any::<bool>(), d in 0.0..380.0f64, v in 0.0..33.0f64,
        gap in 5.0..200.0f64, v_o in 0.0..33.0f64, a_o in -3.0..3.0f64,
    ) {
        let (snap, coord) = pair(ramp, d, v, gap, v_o, a_o);
        let cfg = ControllerConfig::default();
        let p = VehicleParams::default();
        let asm = assemble(&snap[1], &snap, &coord, &cfg, &p).unwrap();
        let dec = decide_assembled(&snap[1], &asm, &cfg, &p);
        match dec.status {
            DecisionStatus::Optimal => {
                prop_assert!(asm.problem.max_violation(dec.u, dec.theta) <= 1e-9);
            }
            DecisionStatus::FallbackBrake => {
                prop_assert_eq!(dec.u, input_for_accel(cfg.a_min, v, &p));
            }
        }
    }

    #[test]
    fn decide_is_deterministic(
        ramp in any::<bool>(), d in 0.0..380.0f64, v in 0.0..33.0f64,
        gap in 5.0..200.0f64, v_o in 0.0..33.0f64,
    ) {
        let (snap, coord) = pair(ramp, d, v, gap, v_o, 0.0);
        let cfg = ControllerConfig::default();
        let p = VehicleParams::default();
        let a = decide(&snap[1], &snap, &coord, &cfg, &p).unwrap();
        let b = decide(&snap[1].clone(), &snap.clone(), &coord.clone(), &cfg, &p).unwrap();
        prop_assert_eq!(a.u.to_bits(), b.u.to_bits());
        prop_assert_eq!(a.theta.to_bits(), b.theta.to_bits());
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.active_set, b.active_set);
    }

    #[test]
    fn isolated_cav_is_pushed_towards_desired_speed(v in 0.0..30.0f64) {
        let cfg = ControllerConfig::default();
        let p = VehicleParams::default();
        let mut coord = CoordinatorState::new(400.0);
        let mut ego = VehicleState::new(0, VehicleClass::Cav, Lane::Main, 0.0, v, 0.0);
        ego.id = Some(coord.register(0, Lane::Main, VehicleClass::Cav));
        let dec = decide(&ego, &[ego.clone()], &coord, &cfg, &p).unwrap();
        prop_assert_eq!(dec.status, DecisionStatus::Optimal);
        let err = v - cfg.v_des;
        if dec.theta < cfg.clf_rate * err * err {
            prop_assert!(dec.u > resistance_force(v, &p));
        }
        if v <= 20.0 {
            prop_assert!(dec.theta < cfg.clf_rate * err * err);
        }
    }

    #[test]
    fn modes_only_move_forward(seed in 0u64..10_000) {
        let log = run(&random_scenario(seed)).unwrap();
        for info in &log.vehicles {
            let modes: Vec<Mode> = log.series(info.uid).iter().map(|(_, r)| r.mode).collect();
            prop_assert!(modes.windows(2).all(|w| w[0] <= w[1]), "uid {} modes {:?}", info.uid, modes);
        }
    }
}
