//! V2X message layer: BSM/DIM records and codecs, a lossy channel, the host's
//! local object map and BSM trace files.

mod channel;
mod map;
mod message;
pub mod trace;

pub use channel::Channel;
pub use map::{LocalObjectMap, MapEntry};
pub use message::{
    decode_bsm, decode_dim, encode_bsm, encode_dim, AppType, Bsm, Dim, MessageError, BSM_LEN,
    DIM_LEN,
};

use crate::geometry::TrackSpec;
use crate::traffic::VehicleState;

/// BSM describing a simulated vehicle's current state.
pub fn bsm_from_state(track: &TrackSpec, v: &VehicleState, timestamp_ms: u64) -> Bsm {
    let pose = v.pose(track);
    Bsm {
        sender_id: v.id,
        timestamp_ms,
        x: pose.x,
        y: pose.y,
        heading: pose.heading,
        speed: v.ground_speed(),
        yaw_rate: v.yaw_rate,
        accel: v.accel,
        turn_signal: v.turn_signal,
    }
}
