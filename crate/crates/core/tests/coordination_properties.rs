use proptest::prelude::*;

use onramp::scenario::{bundled, bundled_names, random_scenario};
use onramp::{run, CoordinatorState, Event, Lane, VehicleClass};

#[derive(Debug, Clone)]
enum Op {
    Register(bool),
    Retire(u32),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![any::<bool>().prop_map(Op::Register), (1u32..12).prop_map(Op::Retire)]
}

proptest! {
    #[test]
    fn ids_stay_a_gap_free_fifo_prefix(ops in prop::collection::vec(op(), 0..60)) {
        let mut coord = CoordinatorState::new(400.0);
        let mut model: Vec<usize> = Vec::new();
        let mut next_uid = 0;
        for op in ops {
            match op {
                Op::Register(ramp) => {
                    let lane = if ramp { Lane::Ramp } else { Lane::Main };
                    let id = coord.register(next_uid, lane, VehicleClass::Cav);
                    model.push(next_uid);
                    next_uid += 1;
                    prop_assert_eq!(id as usize, model.len());
                }
                Op::Retire(id) => {
                    let out = coord.retire(id);
                    if (id as usize) <= model.len() {
                        prop_assert_eq!(out.unwrap().uid, model.remove(id as usize - 1));
                    } else {
                        prop_assert!(out.is_err());
                    }
                }
            }
            let uids: Vec<usize> = coord.active().iter().map(|e| e.uid).collect();
            prop_assert_eq!(&uids, &model);
            for (k, uid) in model.iter().enumerate() {
                let id = k as u32 + 1;
                prop_assert_eq!(coord.id_of(*uid), Some(id));
                let preds = coord.predecessors(id).unwrap();
                if let Some(ip) = preds.ip {
                    prop_assert!(ip < id);
                    prop_assert_eq!(coord.entry(ip).unwrap().lane, coord.entry(id).unwrap().lane);
                }
                if let Some(m) = preds.merge_pred {
                    prop_assert_eq!(m, id - 1);
                }
            }
        }
    }
}

fn replay_ids(name: &str, spec: &onramp::ScenarioSpec) {
    let log = run(spec).unwrap();
    let mut coord = CoordinatorState::new(spec.zone_length());
    let lane_of = |uid: usize| log.vehicles.iter().find(|v| v.uid == uid).unwrap();
    for e in &log.events {
        match *e {
            Event::Entry { uid, id, lane, .. } => {
                assert_eq!(coord.register(uid, lane, lane_of(uid).class), id, "{name}: entry of {uid}");
            }
            Event::Retire { uid, id, .. } => {
                assert_eq!(coord.retire(id).unwrap().uid, uid, "{name}: retire of {uid}");
            }
            _ => {}
        }
    }
    let mut still_in_zone: Vec<(u32, usize)> = log
        .steps
        .last()
        .map(|s| s.vehicles.iter().filter_map(|r| r.id.map(|id| (id, r.uid))).collect())
        .unwrap_or_default();
    still_in_zone.sort();
    let replayed: Vec<(u32, usize)> = coord.active().iter().enumerate().map(|(k, e)| (k as u32 + 1, e.uid)).collect();
    assert_eq!(replayed, still_in_zone, "{name}: final zone contents");
}

#[test]
fn event_log_replays_the_id_timeline() {
    for name in bundled_names() {
        replay_ids(name, &bundled(name).unwrap());
    }
    for seed in 0..20 {
        replay_ids(&format!("random-{seed}"), &random_scenario(seed));
    }
}
