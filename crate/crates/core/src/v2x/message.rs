//! Over-the-air message records and their fixed little-endian layouts.
//!
//! BSM (61 bytes): sender u32 | timestamp_ms u64 | x, y, heading, speed,
//! yaw_rate, accel as f64 | turn_signal u8.
//!
//! DIM (18 bytes): sender u32 | target u32 | app_type u8 | direction u8 |
//! timestamp_ms u64.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Direction, TurnSignal, VehicleId};

pub const BSM_LEN: usize = 4 + 8 + 6 * 8 + 1;
pub const DIM_LEN: usize = 4 + 4 + 1 + 1 + 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MessageError {
    #[error("malformed message: expected {expected} bytes, got {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("malformed message: invalid {field} byte {value:#04x}")]
    InvalidEnum { field: &'static str, value: u8 },
    #[error("malformed message: non-finite {field}")]
    NonFinite { field: &'static str },
    #[error("malformed message: DIM target equals sender {0}")]
    SelfAddressed(VehicleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bsm {
    pub sender_id: VehicleId,
    pub timestamp_ms: u64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    pub accel: f64,
    pub turn_signal: TurnSignal,
}

impl Bsm {
    fn float_fields(&self) -> [(&'static str, f64); 6] {
        [
            ("x", self.x),
            ("y", self.y),
            ("heading", self.heading),
            ("speed", self.speed),
            ("yaw_rate", self.yaw_rate),
            ("accel", self.accel),
        ]
    }
}

fn signal_byte(s: TurnSignal) -> u8 {
    match s {
        TurnSignal::Off => 0,
        TurnSignal::Left => 1,
        TurnSignal::Right => 2,
    }
}

fn signal_from_byte(b: u8) -> Result<TurnSignal, MessageError> {
    match b {
        0 => Ok(TurnSignal::Off),
        1 => Ok(TurnSignal::Left),
        2 => Ok(TurnSignal::Right),
        value => Err(MessageError::InvalidEnum {
            field: "turn_signal",
            value,
        }),
    }
}

pub fn encode_bsm(b: &Bsm) -> Result<[u8; BSM_LEN], MessageError> {
    let mut out = [0u8; BSM_LEN];
    out[0..4].copy_from_slice(&b.sender_id.0.to_le_bytes());
    out[4..12].copy_from_slice(&b.timestamp_ms.to_le_bytes());
    for (k, (field, v)) in b.float_fields().into_iter().enumerate() {
        if !v.is_finite() {
            return Err(MessageError::NonFinite { field });
        }
        let at = 12 + 8 * k;
        out[at..at + 8].copy_from_slice(&v.to_le_bytes());
    }
    out[BSM_LEN - 1] = signal_byte(b.turn_signal);
    Ok(out)
}

fn read_f64(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

pub fn decode_bsm(bytes: &[u8]) -> Result<Bsm, MessageError> {
    if bytes.len() != BSM_LEN {
        return Err(MessageError::WrongLength {
            expected: BSM_LEN,
            actual: bytes.len(),
        });
    }
    let f = |k: usize| read_f64(bytes, 12 + 8 * k);
    let bsm = Bsm {
        sender_id: VehicleId(u32::from_le_bytes(bytes[0..4].try_into().expect("4-byte slice"))),
        timestamp_ms: u64::from_le_bytes(bytes[4..12].try_into().expect("8-byte slice")),
        x: f(0),
        y: f(1),
        heading: f(2),
        speed: f(3),
        yaw_rate: f(4),
        accel: f(5),
        turn_signal: signal_from_byte(bytes[BSM_LEN - 1])?,
    };
    if let Some((field, _)) = bsm.float_fields().into_iter().find(|(_, v)| !v.is_finite()) {
        return Err(MessageError::NonFinite { field });
    }
    Ok(bsm)
}

/// Application families a DIM can carry. Only lane change is emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppType {
    LaneChange,
    StopSignRow,
    SlowTraffic,
    Tailgating,
    LateGreen,
}

impl AppType {
    fn to_byte(self) -> u8 {
        match self {
            AppType::LaneChange => 0,
            AppType::StopSignRow => 1,
            AppType::SlowTraffic => 2,
            AppType::Tailgating => 3,
            AppType::LateGreen => 4,
        }
    }

    fn from_byte(b: u8) -> Result<Self, MessageError> {
        Ok(match b {
            0 => AppType::LaneChange,
            1 => AppType::StopSignRow,
            2 => AppType::SlowTraffic,
            3 => AppType::Tailgating,
            4 => AppType::LateGreen,
            value => {
                return Err(MessageError::InvalidEnum {
                    field: "app_type",
                    value,
                })
            }
        })
    }
}

/// Driver intent message, unicast from the host to one target vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dim {
    pub sender_id: VehicleId,
    pub target_id: VehicleId,
    pub app_type: AppType,
    pub direction: Direction,
    pub timestamp_ms: u64,
}

pub fn encode_dim(d: &Dim) -> Result<[u8; DIM_LEN], MessageError> {
    if d.sender_id == d.target_id {
        return Err(MessageError::SelfAddressed(d.sender_id));
    }
    let mut out = [0u8; DIM_LEN];
    out[0..4].copy_from_slice(&d.sender_id.0.to_le_bytes());
    out[4..8].copy_from_slice(&d.target_id.0.to_le_bytes());
    out[8] = d.app_type.to_byte();
    out[9] = match d.direction {
        Direction::Left => 0,
        Direction::Right => 1,
    };
    out[10..18].copy_from_slice(&d.timestamp_ms.to_le_bytes());
    Ok(out)
}

pub fn decode_dim(bytes: &[u8]) -> Result<Dim, MessageError> {
    if bytes.len() != DIM_LEN {
        return Err(MessageError::WrongLength {
            expected: DIM_LEN,
            actual: bytes.len(),
        });
    }
    let sender_id = VehicleId(u32::from_le_bytes(bytes[0..4].try_into().expect("4-byte slice")));
    let target_id = VehicleId(u32::from_le_bytes(bytes[4..8].try_into().expect("4-byte slice")));
    if sender_id == target_id {
        return Err(MessageError::SelfAddressed(sender_id));
    }
    let direction = match bytes[9] {
        0 => Direction::Left,
        1 => Direction::Right,
        value => {
            return Err(MessageError::InvalidEnum {
                field: "direction",
                value,
            })
        }
    };
    Ok(Dim {
        sender_id,
        target_id,
        app_type: AppType::from_byte(bytes[8])?,
        direction,
        timestamp_ms: u64::from_le_bytes(bytes[10..18].try_into().expect("8-byte slice")),
    })
}
