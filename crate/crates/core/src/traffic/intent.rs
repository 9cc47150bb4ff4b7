use crate::types::Direction;

/// Periodic host-vehicle lane-change intents.
///
/// Intents fire on every period boundary after `t = 0`. The direction sweeps
/// across the lanes: it keeps its previous value while an adjacent lane exists
/// that way and flips at the edge lanes, so a middle lane alternates between
/// left and right on successive visits.
#[derive(Debug, Clone)]
pub struct IntentScheduler {
    period_ms: u64,
    sweep: Direction,
}

impl IntentScheduler {
    pub fn new(period_ms: u64) -> Self {
        Self {
            period_ms,
            sweep: Direction::Right,
        }
    }

    pub fn period_ms(&self) -> u64 {
        self.period_ms
    }

    pub fn poll(&mut self, t_ms: u64, lane: usize, lane_count: usize) -> Option<Direction> {
        if self.period_ms == 0 || t_ms == 0 || !t_ms.is_multiple_of(self.period_ms) || lane_count < 2 {
            return None;
        }
        if self.sweep.target_lane(lane, lane_count).is_none() {
            self.sweep = self.sweep.opposite();
        }
        Some(self.sweep)
    }
}
