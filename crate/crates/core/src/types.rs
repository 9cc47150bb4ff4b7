use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Lateral direction relative to the driving direction. Left is toward lower
/// lane indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    /// Lane offset of the adjacent lane in this direction, in the
    /// "positive = left" convention used by the recognizer.
    pub fn lane_offset(self) -> i32 {
        match self {
            Direction::Left => 1,
            Direction::Right => -1,
        }
    }

    /// Adjacent lane index, if it exists.
    pub fn target_lane(self, lane: usize, lane_count: usize) -> Option<usize> {
        match self {
            Direction::Left => lane.checked_sub(1),
            Direction::Right => (lane + 1 < lane_count).then_some(lane + 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnSignal {
    #[default]
    Off,
    Left,
    Right,
}

impl TurnSignal {
    pub fn direction(self) -> Option<Direction> {
        match self {
            TurnSignal::Off => None,
            TurnSignal::Left => Some(Direction::Left),
            TurnSignal::Right => Some(Direction::Right),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TurnSignal::Off => "off",
            TurnSignal::Left => "left",
            TurnSignal::Right => "right",
        }
    }
}

impl From<Direction> for TurnSignal {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Left => TurnSignal::Left,
            Direction::Right => TurnSignal::Right,
        }
    }
}
