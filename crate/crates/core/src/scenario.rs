//! Declarative scenario files.
//!
//! A scenario is a JSON document with a versioned `schema` field. Every
//! section has defaults, unknown keys are rejected, and all quantities are SI.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

use crate::barriers::ControllerConfig;
use crate::dynamics::{Lane, VehicleClass, VehicleParams};
use crate::error::{Error, Result};
use crate::traffic::{IdmParams, LeadScript};

pub const SCENARIO_SCHEMA: &str = "onramp-scenario/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    CbfClf,
    Scripted,
    Idm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arrival {
    /// s
    pub time: f64,
    pub lane: Lane,
    pub class: VehicleClass,
    /// m/s
    pub speed: f64,
    pub controller: ControllerKind,
    /// Entry position, m. Ignored for scripted vehicles, which start on their script.
    #[serde(default)]
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema: String,
    pub name: String,
    /// s
    pub duration: f64,
    pub seed: u64,
    /// Distance simulated past the merge point before a vehicle is dropped, m.
    pub runout_length: f64,
    /// Distance before the merge point over which human drivers also track
    /// their FIFO predecessor on the other road, m.
    pub hdv_merge_window: f64,
    pub vehicle: VehicleParams,
    pub controller: ControllerConfig,
    pub idm: IdmParams,
    pub lead_script: LeadScript,
    pub arrivals: Vec<Arrival>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            schema: SCENARIO_SCHEMA.to_string(),
            name: "unnamed".to_string(),
            duration: 120.0,
            seed: 0,
            runout_length: 200.0,
            hdv_merge_window: 400.0,
            vehicle: VehicleParams::default(),
            controller: ControllerConfig::default(),
            idm: IdmParams::default(),
            lead_script: LeadScript::default(),
            arrivals: Vec::new(),
        }
    }
}

fn scenario_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Scenario {
        path: path.into(),
        message: message.into(),
    }
}

impl ScenarioSpec {
    pub fn zone_length(&self) -> f64 {
        self.controller.headway_ramp_length
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(scenario_err(
                "schema",
                format!("expected `{SCENARIO_SCHEMA}`, got `{}`", self.schema),
            ));
        }
        let wrap = |e: Error| match e {
            Error::InvalidParameter { field, reason } => scenario_err(field, reason),
            other => other,
        };
        self.vehicle.validate().map_err(wrap)?;
        self.controller.validate().map_err(wrap)?;
        self.idm.validate().map_err(wrap)?;
        self.lead_script.validate().map_err(wrap)?;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(scenario_err("duration", "must be > 0"));
        }
        if !(self.runout_length.is_finite() && self.runout_length >= 0.0) {
            return Err(scenario_err("runout_length", "must be >= 0"));
        }
        if !(self.hdv_merge_window.is_finite() && self.hdv_merge_window >= 0.0) {
            return Err(scenario_err("hdv_merge_window", "must be >= 0"));
        }
        let mut last_time = [f64::NEG_INFINITY; 2];
        let mut scripted = [false; 2];
        for (k, a) in self.arrivals.iter().enumerate() {
            let at = |field: &str| format!("arrivals[{k}].{field}");
            if !(a.time.is_finite() && a.time >= 0.0) {
                return Err(scenario_err(at("time"), "must be >= 0"));
            }
            if !(a.speed.is_finite() && a.speed >= 0.0) {
                return Err(scenario_err(at("speed"), "must be >= 0"));
            }
            if !(a.position.is_finite() && a.position >= 0.0 && a.position < self.zone_length()) {
                return Err(scenario_err(at("position"), "must lie in [0, L)"));
            }
            let lane = a.lane as usize;
            if a.time < last_time[lane] {
                return Err(scenario_err(at("time"), "arrival times must be nondecreasing per lane"));
            }
            last_time[lane] = a.time;
            match (a.class, a.controller) {
                (VehicleClass::Cav, ControllerKind::CbfClf) => {}
                (VehicleClass::Hdv, ControllerKind::Idm) => {}
                (VehicleClass::Hdv, ControllerKind::Scripted) => {
                    if scripted[lane] {
                        return Err(scenario_err(at("controller"), "at most one scripted lead per lane"));
                    }
                    scripted[lane] = true;
                }
                (class, kind) => {
                    return Err(scenario_err(
                        at("controller"),
                        format!("{kind:?} cannot drive a {}", class.as_str()),
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        scenario_err(path, e.into_inner().to_string())
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

const BUNDLED: &[(&str, &str)] = &[
    ("three_vehicle", include_str!("../scenarios/three_vehicle.json")),
    ("multi_hdv_i", include_str!("../scenarios/multi_hdv_i.json")),
    ("multi_hdv_ii", include_str!("../scenarios/multi_hdv_ii.json")),
    ("multi_hdv_iii", include_str!("../scenarios/multi_hdv_iii.json")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_source(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled(name: &str) -> Result<ScenarioSpec> {
    let src = bundled_source(name).ok_or_else(|| Error::UnknownScenario(name.to_string()))?;
    parse_scenario(src)
}

/// A bundled scenario name, or else a path to a scenario file.
pub fn resolve(name_or_path: &str) -> Result<ScenarioSpec> {
    if bundled_source(name_or_path).is_some() {
        bundled(name_or_path)
    } else if name_or_path.ends_with(".json") || Path::new(name_or_path).exists() {
        load_scenario(name_or_path)
    } else {
        Err(Error::UnknownScenario(name_or_path.to_string()))
    }
}

/// Set a dotted path such as `controller.sample_dt` to `raw`, which is read
/// as JSON when it parses and as a string otherwise.
pub fn apply_override(spec: &ScenarioSpec, dotted: &str, raw: &str) -> Result<ScenarioSpec> {
    let mut doc = serde_json::to_value(spec)?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = &mut doc;
    for key in dotted.split('.') {
        slot = match slot {
            Value::Object(map) => map
                .get_mut(key)
                .ok_or_else(|| scenario_err(dotted, format!("no such key `{key}`")))?,
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| scenario_err(dotted, format!("`{key}` is not an index")))?;
                let len = items.len();
                items
                    .get_mut(idx)
                    .ok_or_else(|| scenario_err(dotted, format!("index {idx} out of range ({len})")))?
            }
            _ => return Err(scenario_err(dotted, format!("cannot descend into `{key}`"))),
        };
    }
    *slot = value;
    parse_scenario(&doc.to_string())
}

/// Mixed-traffic scenario with 2 to 8 vehicles drawn from `seed`.
///
/// Arrivals are at least 2 s apart overall and 4 s apart within a lane, entry
/// speeds lie in `[10, 25]` m/s, and at least one vehicle is a CAV. Human
/// drivers use the IDM.
pub fn random_scenario(seed: u64) -> ScenarioSpec {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=8);
    let cav_at = rng.gen_range(0..n);
    let mut last_in_lane = [f64::NEG_INFINITY; 2];
    let mut t = 0.0;
    let mut arrivals = Vec::with_capacity(n);
    for k in 0..n {
        let lane = if rng.gen_bool(0.5) { Lane::Main } else { Lane::Ramp };
        let slot = usize::from(lane == Lane::Ramp);
        if k > 0 {
            t += rng.gen_range(2.0..4.0);
        }
        t = f64::max(t, last_in_lane[slot] + 4.0);
        t = (t * 10.0).round() / 10.0;
        last_in_lane[slot] = t;
        let cav = k == cav_at || rng.gen_bool(0.5);
        arrivals.push(Arrival {
            time: t,
            lane,
            class: if cav { VehicleClass::Cav } else { VehicleClass::Hdv },
            speed: rng.gen_range(10.0..25.0),
            controller: if cav { ControllerKind::CbfClf } else { ControllerKind::Idm },
            position: 0.0,
        });
    }
    ScenarioSpec {
        name: format!("random-{seed}"),
        seed,
        arrivals,
        ..ScenarioSpec::default()
    }
}
