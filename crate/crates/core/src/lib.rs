//! Driver messenger system for V2X lane-change intent sharing.
//!
//! The crate couples a small fixed-step microscopic traffic simulator with a
//! V2X message layer and the host-vehicle pipeline that turns a turn signal
//! into a unicast driver intent message for the right trailing vehicle.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dms;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod path_history;
pub mod traffic;
pub mod types;
pub mod v2x;
