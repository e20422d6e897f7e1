//! Travel-time and energy statistics at the merge point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Lane, VehicleClass};
use crate::sim::SimLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMetrics {
    pub uid: usize,
    pub class: VehicleClass,
    pub lane: Lane,
    pub entry_time: f64,
    /// Interpolated instant at which `d` first reaches `L`.
    pub crossing_time: Option<f64>,
    pub travel_time: Option<f64>,
    /// Cumulative battery energy at the crossing instant, J.
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub vehicles: Vec<VehicleMetrics>,
    pub average_travel_time: Option<f64>,
    pub average_energy: Option<f64>,
    /// Vehicles that never reached the merge point; excluded from averages.
    pub incomplete: Vec<usize>,
}

impl MetricsReport {
    pub fn is_complete(&self) -> bool {
        self.incomplete.is_empty()
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// First crossing of `d = zone` on a time-ordered `(t, d, energy)` series.
pub fn crossing(series: &[(f64, f64, f64)], zone: f64) -> Option<(f64, f64)> {
    let first = series.first()?;
    if first.1 >= zone {
        return Some((first.0, first.2));
    }
    series.windows(2).find_map(|w| {
        let ((t0, d0, e0), (t1, d1, e1)) = (w[0], w[1]);
        (d0 < zone && d1 >= zone).then(|| {
            let frac = (zone - d0) / (d1 - d0);
            (t0 + frac * (t1 - t0), e0 + frac * (e1 - e0))
        })
    })
}

pub fn summarize(log: &SimLog) -> MetricsReport {
    let zone = log.header.scenario.zone_length();
    let mut series: BTreeMap<usize, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for step in &log.steps {
        for r in &step.vehicles {
            series.entry(r.uid).or_default().push((step.t, r.d, r.energy));
        }
    }
    let mut vehicles = Vec::with_capacity(log.vehicles.len());
    let mut incomplete = Vec::new();
    let mut infos: Vec<_> = log.vehicles.iter().collect();
    infos.sort_by_key(|i| i.uid);
    for info in infos {
        let mut s = series.remove(&info.uid).unwrap_or_default();
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        let hit = crossing(&s, zone);
        if hit.is_none() {
            incomplete.push(info.uid);
        }
        vehicles.push(VehicleMetrics {
            uid: info.uid,
            class: info.class,
            lane: info.lane,
            entry_time: info.entry_time,
            crossing_time: hit.map(|h| h.0),
            travel_time: hit.map(|h| h.0 - info.entry_time),
            energy: hit.map(|h| h.1),
        });
    }
    MetricsReport {
        average_travel_time: mean(vehicles.iter().filter_map(|v| v.travel_time)),
        average_energy: mean(vehicles.iter().filter_map(|v| v.energy)),
        vehicles,
        incomplete,
    }
}

/// `(baseline - value) / baseline`.
pub fn saving_ratio(baseline: f64, value: f64) -> f64 {
    (baseline - value) / baseline
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline_travel_time: Option<f64>,
    pub travel_time: Option<f64>,
    pub time_saving: Option<f64>,
    pub baseline_energy: Option<f64>,
    pub energy: Option<f64>,
    pub energy_saving: Option<f64>,
}

pub fn compare(report: &MetricsReport, baseline: &MetricsReport) -> Comparison {
    let ratio = |b: Option<f64>, v: Option<f64>| Some(saving_ratio(b?, v?));
    Comparison {
        baseline_travel_time: baseline.average_travel_time,
        travel_time: report.average_travel_time,
        time_saving: ratio(baseline.average_travel_time, report.average_travel_time),
        baseline_energy: baseline.average_energy,
        energy: report.average_energy,
        energy_saving: ratio(baseline.average_energy, report.average_energy),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_on_the_grid() {
        let s = [(19.9, 398.0, 1.0), (20.0, 400.0, 2.0), (20.1, 402.0, 3.0)];
        assert_eq!(crossing(&s, 400.0), Some((20.0, 2.0)));
    }

    #[test]
    fn crossing_between_samples() {
        let s = [(20.0, 399.0, 10.0), (20.1, 401.0, 14.0)];
        let (t, e) = crossing(&s, 400.0).unwrap();
        assert!((t - 20.05).abs() < 1e-12);
        assert!((e - 12.0).abs() < 1e-12);
    }

    #[test]
    fn no_crossing() {
        assert_eq!(crossing(&[(0.0, 0.0, 0.0), (1.0, 10.0, 0.0)], 400.0), None);
        assert_eq!(crossing(&[], 400.0), None);
    }

    #[test]
    fn saving_ratio_of_self_is_zero() {
        for x in [1.0, 123.456, -7.0, 1e9] {
            assert_eq!(saving_ratio(x, x), 0.0);
        }
        assert!((saving_ratio(100.0, 95.81) - 0.0419).abs() < 1e-12);
    }
}
