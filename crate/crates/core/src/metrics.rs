//! Recognition scoring against simulator ground truth, and post lane-change
//! headway recording.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::TrackSpec;
use crate::traffic::World;
use crate::types::{Direction, VehicleId};

/// Width of the initial-distance bins used for headway series.
pub const HEADWAY_BIN_M: f64 = 10.0;
/// Follower speed below which time headway is reported as the cap.
pub const MIN_HEADWAY_SPEED: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "TP")]
    TruePositive,
    #[serde(rename = "FP")]
    FalsePositive,
    #[serde(rename = "TN")]
    TrueNegative,
    #[serde(rename = "FN")]
    FalseNegative,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::TruePositive => "TP",
            Outcome::FalsePositive => "FP",
            Outcome::TrueNegative => "TN",
            Outcome::FalseNegative => "FN",
        }
    }
}

/// Scores one recognition. A wrong vehicle counts as a false positive only.
pub fn classify(predicted: Option<VehicleId>, truth: Option<VehicleId>) -> Outcome {
    match (predicted, truth) {
        (Some(p), Some(t)) if p == t => Outcome::TruePositive,
        (Some(_), _) => Outcome::FalsePositive,
        (None, None) => Outcome::TrueNegative,
        (None, Some(_)) => Outcome::FalseNegative,
    }
}

/// The true target vehicle: the nearest vehicle trailing the host by at most
/// `thresh` in the adjacent lane toward `direction`. Uses simulator lanes and
/// arc lengths only.
pub fn ground_truth_tv(world: &World, track: &TrackSpec, direction: Direction, thresh: f64) -> Option<VehicleId> {
    let hv = world.host();
    let lane = direction.target_lane(hv.pos.lane, track.lane_count)?;
    world
        .vehicles
        .iter()
        .filter(|v| v.id != hv.id && v.pos.lane == lane)
        .map(|v| (track.longitudinal_gap(hv.pos.s, v.pos.s), v.id))
        .filter(|&(gap, _)| gap > 0.0 && gap <= thresh)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Nearest vehicle behind the host in the host's current lane, at any distance.
pub fn trailing_in_lane(world: &World, track: &TrackSpec) -> Option<VehicleId> {
    let hv = world.host();
    world
        .vehicles
        .iter()
        .filter(|v| v.id != hv.id && v.pos.lane == hv.pos.lane)
        .map(|v| (track.longitudinal_gap(hv.pos.s, v.pos.s), v.id))
        .filter(|&(gap, _)| gap > 0.0)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionEvent {
    pub t_ms: u64,
    pub direction: Direction,
    pub predicted: Option<VehicleId>,
    pub truth: Option<VehicleId>,
    pub outcome: Outcome,
    pub candidates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadwayRecord {
    /// Index of the lane-change window this sample belongs to.
    pub window: u32,
    pub t: f64,
    pub time_headway: f64,
    pub space_headway: f64,
    /// Space headway at the start of the window.
    pub initial_gap: f64,
}

/// Space and time headway for a host/follower pair; `None` once they no
/// longer share a lane.
pub fn headway_sample(world: &World, track: &TrackSpec, tv: VehicleId, time_cap: f64) -> Option<(f64, f64)> {
    let hv = world.host();
    let f = world.vehicle(tv);
    if f.pos.lane != hv.pos.lane {
        return None;
    }
    let space = (track.longitudinal_gap(hv.pos.s, f.pos.s) - hv.length).max(0.0);
    let time = if space == 0.0 {
        0.0
    } else if f.speed < MIN_HEADWAY_SPEED {
        time_cap
    } else {
        (space / f.speed).min(time_cap)
    };
    Some((space, time))
}

#[derive(Debug, Clone, Copy)]
struct OpenWindow {
    index: u32,
    tv: VehicleId,
    remaining: u64,
    initial_gap: f64,
}

/// Records headway for a fixed number of ticks after each host lane change.
#[derive(Debug, Clone)]
pub struct HeadwayRecorder {
    window_ticks: u64,
    time_cap: f64,
    open: Option<OpenWindow>,
    windows: u32,
    pub records: Vec<HeadwayRecord>,
}

impl HeadwayRecorder {
    pub fn new(window_ticks: u64, time_cap: f64) -> Self {
        Self {
            window_ticks,
            time_cap,
            open: None,
            windows: 0,
            records: Vec::new(),
        }
    }

    /// Opens a window against the vehicle now trailing the host in its new
    /// lane; nothing is recorded if there is none.
    pub fn start(&mut self, world: &World, track: &TrackSpec) {
        self.open = None;
        let Some(tv) = trailing_in_lane(world, track) else {
            return;
        };
        let Some((space, _)) = headway_sample(world, track, tv, self.time_cap) else {
            return;
        };
        self.open = Some(OpenWindow {
            index: self.windows,
            tv,
            remaining: self.window_ticks,
            initial_gap: space,
        });
        self.windows += 1;
    }

    /// Samples the open window, if any, at the world's current time.
    pub fn sample(&mut self, world: &World, track: &TrackSpec) {
        let Some(w) = self.open.as_mut() else {
            return;
        };
        match headway_sample(world, track, w.tv, self.time_cap) {
            Some((space, time)) if w.remaining > 0 => {
                self.records.push(HeadwayRecord {
                    window: w.index,
                    t: world.time(),
                    time_headway: time,
                    space_headway: space,
                    initial_gap: w.initial_gap,
                });
                w.remaining -= 1;
                if w.remaining == 0 {
                    self.open = None;
                }
            }
            _ => self.open = None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutcomeCounts {
    #[serde(rename = "TP")]
    pub tp: u64,
    #[serde(rename = "FP")]
    pub fp: u64,
    #[serde(rename = "TN")]
    pub tn: u64,
    #[serde(rename = "FN")]
    pub fn_: u64,
}

impl OutcomeCounts {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::TruePositive => self.tp += 1,
            Outcome::FalsePositive => self.fp += 1,
            Outcome::TrueNegative => self.tn += 1,
            Outcome::FalseNegative => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Percentages in TP, FP, TN, FN order; zeros when empty.
    pub fn percentages(&self) -> Percentages {
        let n = self.total();
        let pct = |c: u64| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 };
        Percentages {
            tp: pct(self.tp),
            fp: pct(self.fp),
            tn: pct(self.tn),
            fn_: pct(self.fn_),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Percentages {
    #[serde(rename = "TP")]
    pub tp: f64,
    #[serde(rename = "FP")]
    pub fp: f64,
    #[serde(rename = "TN")]
    pub tn: f64,
    #[serde(rename = "FN")]
    pub fn_: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadwayBin {
    /// Lower edge of the initial-distance bin, metres.
    pub from: f64,
    pub samples: u64,
    pub mean_space_headway: f64,
    pub mean_time_headway: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub counts: OutcomeCounts,
    pub percentages: Percentages,
    pub intents: u64,
    pub headway_samples: u64,
    pub headway_windows: u64,
    pub mean_space_headway: Option<f64>,
    pub mean_time_headway: Option<f64>,
    pub headway_bins: Vec<HeadwayBin>,
}

/// Folds events and headway samples into counts, percentages and binned
/// headway means.
pub fn aggregate(events: &[RecognitionEvent], headway: &[HeadwayRecord]) -> ExperimentResult {
    let mut counts = OutcomeCounts::default();
    for e in events {
        counts.add(e.outcome);
    }
    let n = headway.len() as f64;
    let mean = |f: fn(&HeadwayRecord) -> f64| (!headway.is_empty()).then(|| headway.iter().map(f).sum::<f64>() / n);

    let mut bins: BTreeMap<i64, (u64, f64, f64)> = BTreeMap::new();
    for r in headway {
        let b = bins.entry((r.initial_gap / HEADWAY_BIN_M).floor() as i64).or_default();
        b.0 += 1;
        b.1 += r.space_headway;
        b.2 += r.time_headway;
    }
    let mut windows: Vec<u32> = headway.iter().map(|r| r.window).collect();
    windows.dedup();

    ExperimentResult {
        counts,
        percentages: counts.percentages(),
        intents: events.len() as u64,
        headway_samples: headway.len() as u64,
        headway_windows: windows.len() as u64,
        mean_space_headway: mean(|r| r.space_headway),
        mean_time_headway: mean(|r| r.time_headway),
        headway_bins: bins
            .into_iter()
            .map(|(k, (c, s, t))| HeadwayBin {
                from: k as f64 * HEADWAY_BIN_M,
                samples: c,
                mean_space_headway: s / c as f64,
                mean_time_headway: t / c as f64,
            })
            .collect(),
    }
}
