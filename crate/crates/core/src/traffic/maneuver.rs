use serde::Serialize;

use crate::types::{Direction, VehicleId};

use super::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverStatus {
    Pending,
    Executing,
    Done,
    Aborted,
}

/// A one-lane lateral move with a linear lateral-offset profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChangeManeuver {
    pub vehicle_id: VehicleId,
    pub from_lane: usize,
    pub to_lane: usize,
    pub direction: Direction,
    /// Simulation time the maneuver was requested, seconds.
    pub start_time: f64,
    pub duration: f64,
    pub elapsed: f64,
    pub status: ManeuverStatus,
}

impl LaneChangeManeuver {
    pub fn pending(
        vehicle_id: VehicleId,
        from_lane: usize,
        direction: Direction,
        lane_count: usize,
        start_time: f64,
        duration: f64,
    ) -> Option<Self> {
        let to_lane = direction.target_lane(from_lane, lane_count)?;
        Some(Self {
            vehicle_id,
            from_lane,
            to_lane,
            direction,
            start_time,
            duration,
            elapsed: 0.0,
            status: ManeuverStatus::Pending,
        })
    }

    /// +1 when moving toward higher lane indices.
    pub fn lateral_sign(&self) -> f64 {
        if self.to_lane > self.from_lane {
            1.0
        } else {
            -1.0
        }
    }

    pub fn progress(&self) -> f64 {
        (self.elapsed / self.duration).clamp(0.0, 1.0)
    }

    pub fn is_active(&self) -> bool {
        matches!(
            self.status,
            ManeuverStatus::Pending | ManeuverStatus::Executing
        )
    }
}

/// Advances an executing maneuver by one tick and returns the lateral speed
/// (positive toward higher lane index) over that tick.
///
/// On completion the vehicle's lane becomes `to_lane`, its lateral offset
/// resets to zero and its turn signal switches off.
pub fn execute_lane_change(
    vehicle: &mut VehicleState,
    maneuver: &mut LaneChangeManeuver,
    lane_width: f64,
    dt: f64,
) -> f64 {
    debug_assert_eq!(maneuver.status, ManeuverStatus::Executing);
    let before = vehicle.pos.lane as f64 * lane_width + vehicle.pos.lateral_offset;
    maneuver.elapsed += dt;
    // snap to completion when within rounding of the duration
    if maneuver.elapsed >= maneuver.duration - 1e-9 {
        maneuver.elapsed = maneuver.duration;
        maneuver.status = ManeuverStatus::Done;
        vehicle.pos.lane = maneuver.to_lane;
        vehicle.pos.lateral_offset = 0.0;
        vehicle.turn_signal = crate::types::TurnSignal::Off;
    } else {
        vehicle.pos.lateral_offset = maneuver.lateral_sign() * lane_width * maneuver.progress();
    }
    let after = vehicle.pos.lane as f64 * lane_width + vehicle.pos.lateral_offset;
    (after - before) / dt
}
