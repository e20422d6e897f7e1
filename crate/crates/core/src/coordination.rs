//! FIFO identity bookkeeping for the coordination zone.
//!
//! Identities are always the gap-free prefix `1..=N`. A vehicle entering gets
//! `N + 1`; when vehicle `k` crosses the merge point it is removed and every
//! identity above `k` shifts down by one.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Lane, VehicleClass};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneEntry {
    pub uid: usize,
    pub lane: Lane,
    pub class: VehicleClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinatorState {
    pub zone_length: f64,
    /// FIFO order; the entry at index `k` holds identity `k + 1`.
    active: Vec<ZoneEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Predecessors {
    /// Nearest lower identity in the same lane.
    pub ip: Option<u32>,
    /// `i - 1`, when the merging constraint applies to it.
    pub merge_pred: Option<u32>,
}

impl CoordinatorState {
    pub fn new(zone_length: f64) -> Self {
        Self {
            zone_length,
            active: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn next_id(&self) -> u32 {
        self.active.len() as u32 + 1
    }

    pub fn active(&self) -> &[ZoneEntry] {
        &self.active
    }

    pub fn register(&mut self, uid: usize, lane: Lane, class: VehicleClass) -> u32 {
        let id = self.next_id();
        self.active.push(ZoneEntry { uid, lane, class });
        id
    }

    pub fn retire(&mut self, id: u32) -> Result<ZoneEntry> {
        let idx = self.index(id)?;
        Ok(self.active.remove(idx))
    }

    pub fn entry(&self, id: u32) -> Result<&ZoneEntry> {
        Ok(&self.active[self.index(id)?])
    }

    pub fn id_of(&self, uid: usize) -> Option<u32> {
        self.active
            .iter()
            .position(|e| e.uid == uid)
            .map(|k| k as u32 + 1)
    }

    fn index(&self, id: u32) -> Result<usize> {
        if id == 0 || id as usize > self.active.len() {
            return Err(Error::UnknownId(id));
        }
        Ok(id as usize - 1)
    }

    /// Every active vehicle is upstream of the merge point, so a ramp vehicle
    /// here has always not yet merged.
    pub fn predecessors(&self, id: u32) -> Result<Predecessors> {
        let idx = self.index(id)?;
        let me = self.active[idx];
        let ip = self.active[..idx]
            .iter()
            .rposition(|e| e.lane == me.lane)
            .map(|k| k as u32 + 1);
        let merge_pred = if id == 1 {
            None
        } else {
            let prev = id - 1;
            match me.lane {
                Lane::Ramp => Some(prev),
                Lane::Main if ip.is_none_or(|ip| ip < prev) => Some(prev),
                Lane::Main => None,
            }
        };
        Ok(Predecessors { ip, merge_pred })
    }
}
