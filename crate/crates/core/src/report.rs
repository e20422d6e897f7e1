//! Versioned JSON run summary.
//!
//! Everything except `wall_clock` is a pure function of the manifest, so two
//! runs of one manifest produce identical summaries once that field is dropped.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::metrics::{self, Comparison, MetricsReport};
use crate::scenario::ScenarioSpec;
use crate::sim::{Event, SimLog};

pub const SUMMARY_SCHEMA: &str = "onramp-summary/1";

/// Controller decision timing, s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub decisions: usize,
    pub mean: f64,
    /// Nearest-rank 99th percentile.
    pub p99: f64,
    pub max: f64,
}

impl WallClock {
    pub fn from_samples(times: &[f64]) -> Self {
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let at = |q: f64| {
            if n == 0 {
                0.0
            } else {
                sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1]
            }
        };
        Self {
            decisions: n,
            mean: if n == 0 { 0.0 } else { sorted.iter().sum::<f64>() / n as f64 },
            p99: at(0.99),
            max: sorted.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    /// How the run was requested, echoed verbatim.
    pub manifest: Value,
    pub scenario: ScenarioSpec,
    pub config_hash: String,
    pub halted: bool,
    pub event_counts: BTreeMap<String, usize>,
    pub events: Vec<Event>,
    pub metrics: MetricsReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    /// Not reproducible; excluded from every determinism comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<WallClock>,
}

impl Summary {
    pub fn new(log: &SimLog, manifest: Value) -> Self {
        let mut event_counts = BTreeMap::new();
        for e in &log.events {
            *event_counts.entry(e.kind().to_string()).or_insert(0) += 1;
        }
        Self {
            schema: SUMMARY_SCHEMA.to_string(),
            manifest,
            scenario: log.header.scenario.clone(),
            config_hash: log.header.config_hash.clone(),
            halted: log.halted,
            event_counts,
            events: log.events.clone(),
            metrics: metrics::summarize(log),
            comparison: None,
            wall_clock: Some(WallClock::from_samples(&log.decide_times)),
        }
    }

    pub fn compared_to(mut self, baseline: &MetricsReport) -> Self {
        self.comparison = Some(metrics::compare(&self.metrics, baseline));
        self
    }

    /// Copy without the wall-clock section.
    pub fn reproducible(&self) -> Self {
        Self { wall_clock: None, ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

pub fn load_summary(path: impl AsRef<Path>) -> Result<Summary> {
    let text = std::fs::read_to_string(path)?;
    let summary: Summary = serde_json::from_str(&text)?;
    if summary.schema != SUMMARY_SCHEMA {
        return Err(crate::error::Error::Scenario {
            path: "schema".into(),
            message: format!("expected `{SUMMARY_SCHEMA}`, found `{}`", summary.schema),
        });
    }
    Ok(summary)
}
