use std::collections::BTreeMap;

use crate::types::VehicleId;

use super::message::Bsm;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEntry {
    pub bsm: Bsm,
    pub received_ms: u64,
}

/// Host vehicle's view of nearby vehicles, fused from received BSMs.
///
/// Keeps only the latest BSM per sender. A BSM older than the stored one is
/// dropped and counted.
#[derive(Debug, Clone)]
pub struct LocalObjectMap {
    entries: BTreeMap<VehicleId, MapEntry>,
    host: Option<Bsm>,
    staleness_timeout_ms: u64,
    out_of_order_drops: u64,
}

impl LocalObjectMap {
    pub fn new(staleness_timeout_s: f64) -> Self {
        Self {
            entries: BTreeMap::new(),
            host: None,
            staleness_timeout_ms: (staleness_timeout_s * 1000.0).round() as u64,
            out_of_order_drops: 0,
        }
    }

    pub fn set_host_state(&mut self, bsm: Bsm) {
        self.host = Some(bsm);
    }

    pub fn host_state(&self) -> Option<&Bsm> {
        self.host.as_ref()
    }

    /// Returns `false` if the BSM was older than the stored entry.
    pub fn update(&mut self, bsm: Bsm, now_ms: u64) -> bool {
        if let Some(existing) = self.entries.get(&bsm.sender_id) {
            if bsm.timestamp_ms < existing.bsm.timestamp_ms {
                self.out_of_order_drops += 1;
                return false;
            }
        }
        self.entries.insert(
            bsm.sender_id,
            MapEntry {
                bsm,
                received_ms: now_ms,
            },
        );
        true
    }

    /// Removes entries received more than the staleness timeout ago.
    pub fn expire_stale(&mut self, now_ms: u64) -> usize {
        let timeout = self.staleness_timeout_ms;
        let before = self.entries.len();
        self.entries
            .retain(|_, e| now_ms.saturating_sub(e.received_ms) <= timeout);
        before - self.entries.len()
    }

    pub fn get(&self, id: VehicleId) -> Option<&MapEntry> {
        self.entries.get(&id)
    }

    /// Entries in ascending sender id order.
    pub fn iter(&self) -> impl Iterator<Item = &MapEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn out_of_order_drops(&self) -> u64 {
        self.out_of_order_drops
    }

    /// Age of the oldest entry relative to `now_ms`.
    pub fn max_age_ms(&self, now_ms: u64) -> Option<u64> {
        self.entries
            .values()
            .map(|e| now_ms.saturating_sub(e.received_ms))
            .max()
    }
}
