use std::collections::BTreeSet;
use std::sync::Mutex;

use crate::certs::PartyId;

/// Recently accepted `(peer, timestamp)` pairs.
///
/// Timestamp freshness alone admits a replay while the original is still
/// inside the skew window; remembering accepted pairs for `2 * skew` closes
/// that window. Entries older than that are evicted on insert, and the set
/// never holds more than `capacity` entries (oldest dropped first).
#[derive(Debug)]
pub struct ReplayCache {
    seen: Mutex<BTreeSet<(u64, PartyId)>>,
    capacity: usize,
}

impl Default for ReplayCache {
    fn default() -> Self {
        ReplayCache::with_capacity(1 << 16)
    }
}

impl ReplayCache {
    pub fn with_capacity(capacity: usize) -> Self {
        ReplayCache { seen: Mutex::new(BTreeSet::new()), capacity: capacity.max(1) }
    }

    pub fn contains(&self, peer: PartyId, timestamp: u64) -> bool {
        self.seen.lock().unwrap().contains(&(timestamp, peer))
    }

    /// Inserts the pair; returns false if it was already present.
    pub fn check_and_insert(&self, peer: PartyId, timestamp: u64, now: u64, skew_ms: u64) -> bool {
        let mut seen = self.seen.lock().unwrap();
        let horizon = now.saturating_sub(2 * skew_ms);
        if seen.first().is_some_and(|(t, _)| *t < horizon) {
            *seen = seen.split_off(&(horizon, PartyId([0; 8])));
        }
        if !seen.insert((timestamp, peer)) {
            return false;
        }
        while seen.len() > self.capacity {
            seen.pop_first();
        }
        true
    }

    pub fn len(&self) -> usize {
        self.seen.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
