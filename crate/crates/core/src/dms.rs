//! Driver messenger pipeline for the lane-change application: intent
//! detection from the host's turn signal, trailing-vehicle filtering, target
//! vehicle recognition and DIM issue.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{TrackSpec, WorldPose};
use crate::path_history::PathHistoryBuffer;
use crate::types::{Direction, TurnSignal, VehicleId};
use crate::v2x::{AppType, Bsm, Dim, LocalObjectMap};

/// Fraction of a lane width by which a raw offset may miss the nearest lane
/// before the candidate is treated as ambiguous.
pub const AMBIGUITY_FRACTION: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneChangeIntent {
    pub hv_id: VehicleId,
    pub direction: Direction,
    pub detected_at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecognitionMethod {
    PathHistory,
    LateralOnly,
}

impl RecognitionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RecognitionMethod::PathHistory => "path_history",
            RecognitionMethod::LateralOnly => "lateral_only",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmsError {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmsConfig {
    pub tv_dist_thresh: f64,
    pub recognition_method: RecognitionMethod,
    pub lane_width: f64,
}

impl DmsConfig {
    pub fn validate(&self) -> Result<(), DmsError> {
        if !(self.tv_dist_thresh > 0.0) {
            return Err(DmsError::InvalidConfig {
                key: "tv_dist_thresh",
                reason: "must be > 0".into(),
            });
        }
        if !(self.lane_width > 0.0) {
            return Err(DmsError::InvalidConfig {
                key: "lane_width",
                reason: "must be > 0".into(),
            });
        }
        Ok(())
    }
}

/// Edge-triggered application detection: one intent per signal activation.
#[derive(Debug, Clone, Default)]
pub struct ApplicationDetector {
    last_signal: TurnSignal,
}

impl ApplicationDetector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks the host's latest state. `maneuver_executing` suppresses
    /// intents while a lane change is already under way.
    pub fn detect(&mut self, hv: &Bsm, maneuver_executing: bool, t_ms: u64) -> Option<LaneChangeIntent> {
        let signal = hv.turn_signal;
        let rising = signal != self.last_signal;
        self.last_signal = signal;
        let direction = signal.direction()?;
        (rising && !maneuver_executing).then_some(LaneChangeIntent {
            hv_id: hv.sender_id,
            direction,
            detected_at_ms: t_ms,
        })
    }
}

/// How longitudinal distance behind the host is measured.
#[derive(Debug, Clone, Copy)]
pub enum GapMeasure<'a> {
    /// Arc length along the track between projected positions.
    Track(&'a TrackSpec),
    /// Distance along the host's path history.
    PathHistory(&'a PathHistoryBuffer),
}

impl GapMeasure<'_> {
    /// Distance of `(x, y)` behind the host; negative or `None` when it
    /// cannot be placed behind.
    pub fn behind(&self, hv: &Bsm, x: f64, y: f64) -> Option<f64> {
        match *self {
            GapMeasure::Track(track) => {
                let hv_pos = track
                    .project_to_track(&WorldPose::new(hv.x, hv.y, hv.heading))
                    .ok()?;
                let pos = track.project_to_track(&WorldPose::new(x, y, 0.0)).ok()?;
                Some(track.longitudinal_gap(hv_pos.s, pos.s))
            }
            GapMeasure::PathHistory(ph) => {
                let idx = ph.closest_point(x, y).ok()?;
                Some(ph.path_length_since(idx) - ph.longitudinal_offset_at(idx, x, y))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: VehicleId,
    pub x: f64,
    pub y: f64,
    /// Distance behind the host.
    pub gap: f64,
}

/// Vehicles in the map trailing the host by at most `thresh`, nearest first.
pub fn find_trailing(map: &LocalObjectMap, hv: &Bsm, measure: GapMeasure<'_>, thresh: f64) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = map
        .iter()
        .filter(|e| e.bsm.sender_id != hv.sender_id)
        .filter_map(|e| {
            let gap = measure.behind(hv, e.bsm.x, e.bsm.y)?;
            (gap > 0.0 && gap <= thresh).then_some(Candidate {
                id: e.bsm.sender_id,
                x: e.bsm.x,
                y: e.bsm.y,
                gap,
            })
        })
        .collect();
    out.sort_by(|a, b| a.gap.total_cmp(&b.gap).then(a.id.cmp(&b.id)));
    out
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    #[error("candidate not covered by the path history")]
    NoCoverage,
    #[error("candidate lies between lanes")]
    Ambiguous,
}

/// Raw lateral offset in metres and the lane offset derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneOffset {
    pub raw: f64,
    pub lanes: i32,
}

fn round_lanes(raw: f64, lane_width: f64) -> Result<i32, SkipReason> {
    let lanes = (raw / lane_width).round();
    if (raw - lanes * lane_width).abs() > AMBIGUITY_FRACTION * lane_width {
        return Err(SkipReason::Ambiguous);
    }
    Ok(lanes as i32)
}

/// Lane offset of a candidate relative to the host's current lane, measured
/// from the nearest path history point and corrected for the host's lane
/// changes since. Positive is left.
pub fn lane_offset_ph(ph: &PathHistoryBuffer, x: f64, y: f64, lane_width: f64) -> Result<LaneOffset, SkipReason> {
    let idx = ph.closest_point(x, y).map_err(|_| SkipReason::NoCoverage)?;
    // behind the oldest point: the history does not reach back that far
    if idx == 0 && ph.len() > 1 && ph.longitudinal_offset_at(0, x, y) < -lane_width {
        return Err(SkipReason::NoCoverage);
    }
    let raw = ph.lateral_offset_at(idx, x, y);
    let lanes = round_lanes(raw, lane_width)? - ph.lane_shift_since(idx, lane_width);
    Ok(LaneOffset { raw, lanes })
}

/// Lane offset from the perpendicular distance to the host's current heading
/// ray. Positive is left.
pub fn lane_offset_lateral(hv: &Bsm, x: f64, y: f64, lane_width: f64) -> Result<LaneOffset, SkipReason> {
    let (dx, dy) = (x - hv.x, y - hv.y);
    let raw = hv.heading.cos() * dy - hv.heading.sin() * dx;
    Ok(LaneOffset {
        raw,
        lanes: round_lanes(raw, lane_width)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateDiagnostic {
    pub id: VehicleId,
    pub gap: f64,
    pub offset: Result<LaneOffset, SkipReason>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecognitionResult {
    pub tv_id: Option<VehicleId>,
    pub candidates_considered: usize,
    pub diagnostics: Vec<CandidateDiagnostic>,
}

/// Picks the nearest candidate whose lane offset equals the adjacent lane in
/// the intent direction. `offset` is evaluated for every candidate so the
/// diagnostics are complete.
pub fn recognize_tv<F>(candidates: &[Candidate], direction: Direction, mut offset: F) -> RecognitionResult
where
    F: FnMut(&Candidate) -> Result<LaneOffset, SkipReason>,
{
    let wanted = direction.lane_offset();
    let diagnostics: Vec<CandidateDiagnostic> = candidates
        .iter()
        .map(|c| CandidateDiagnostic {
            id: c.id,
            gap: c.gap,
            offset: offset(c),
        })
        .collect();
    let tv_id = diagnostics
        .iter()
        .find(|d| d.offset.is_ok_and(|o| o.lanes == wanted))
        .map(|d| d.id);
    RecognitionResult {
        tv_id,
        candidates_considered: candidates.len(),
        diagnostics,
    }
}

/// Filters trailing candidates and picks the target vehicle for one intent.
pub fn recognize(
    config: &DmsConfig,
    map: &LocalObjectMap,
    hv: &Bsm,
    ph: &PathHistoryBuffer,
    measure: GapMeasure<'_>,
    direction: Direction,
) -> RecognitionResult {
    let candidates = find_trailing(map, hv, measure, config.tv_dist_thresh);
    match config.recognition_method {
        RecognitionMethod::PathHistory => {
            recognize_tv(&candidates, direction, |c| lane_offset_ph(ph, c.x, c.y, config.lane_width))
        }
        RecognitionMethod::LateralOnly => {
            recognize_tv(&candidates, direction, |c| lane_offset_lateral(hv, c.x, c.y, config.lane_width))
        }
    }
}

/// Issues at most one DIM per intent.
#[derive(Debug, Clone, Default)]
pub struct DimLatch {
    last_intent: Option<LaneChangeIntent>,
}

impl DimLatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn issue(&mut self, intent: &LaneChangeIntent, tv_id: Option<VehicleId>, t_ms: u64) -> Option<Dim> {
        let tv = tv_id.filter(|&tv| tv != intent.hv_id)?;
        if self.last_intent.as_ref() == Some(intent) {
            return None;
        }
        self.last_intent = Some(*intent);
        Some(Dim {
            sender_id: intent.hv_id,
            target_id: tv,
            app_type: AppType::LaneChange,
            direction: intent.direction,
            timestamp_ms: t_ms,
        })
    }
}
