//! Offline replay of recorded BSM traces through the recognizer, and the
//! synthetic curved-road benchmark trace.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dms::{recognize, DmsConfig, GapMeasure, RecognitionMethod};
use crate::geometry::{build_ring_track, TrackPosition};
use crate::metrics::{classify, ground_truth_tv, Outcome, OutcomeCounts, Percentages};
use crate::path_history::{PathHistoryBuffer, PathHistoryPoint};
use crate::traffic::{KraussParams, Mode, VehicleState, World};
use crate::types::{Direction, VehicleId};
use crate::v2x::trace::check_monotone;
use crate::v2x::{bsm_from_state, Bsm, LocalObjectMap};

use super::output::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayScenario {
    pub hv_id: VehicleId,
    pub intent_period_ms: u64,
    pub direction: Direction,
    pub tv_dist_thresh: f64,
    pub lane_width: f64,
    pub ph_max_length: f64,
    pub ph_min_spacing: f64,
    pub staleness_timeout: f64,
}

impl Default for ReplayScenario {
    fn default() -> Self {
        Self {
            hv_id: VehicleId(0),
            intent_period_ms: 10_000,
            direction: Direction::Left,
            tv_dist_thresh: 300.0,
            lane_width: 3.5,
            ph_max_length: 300.0,
            ph_min_spacing: 1.0,
            staleness_timeout: 1.0,
        }
    }
}

/// Expected target vehicle for the intent at `t_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub t_ms: u64,
    pub expected_tv: Option<VehicleId>,
    /// Distance of the expected vehicle behind the host, metres.
    pub gap: Option<f64>,
}

pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> Result<(), HarnessError> {
    let mut wr = csv::Writer::from_writer(io::BufWriter::new(fs::File::create(path)?));
    for a in annotations {
        wr.serialize(a)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>, HarnessError> {
    let mut rd = csv::Reader::from_reader(io::BufReader::new(fs::File::open(path)?));
    rd.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| HarnessError::Replay(format!("annotation record {i}: {e}"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayEvent {
    pub t_ms: u64,
    pub direction: Direction,
    pub predicted: Option<VehicleId>,
    pub candidates: usize,
    /// Present when the intent was annotated.
    pub expected: Option<Annotation>,
    pub outcome: Option<Outcome>,
}

/// Feeds a trace through the host's map and path history and runs
/// recognition at every scheduled intent.
pub fn run_replay(
    bsms: &[Bsm],
    scenario: &ReplayScenario,
    method: RecognitionMethod,
    annotations: Option<&[Annotation]>,
) -> Result<Vec<ReplayEvent>, HarnessError> {
    check_monotone(bsms)?;
    if !bsms.iter().any(|b| b.sender_id == scenario.hv_id) {
        return Err(HarnessError::Replay(format!("host {} not present in trace", scenario.hv_id)));
    }
    if scenario.intent_period_ms == 0 {
        return Err(HarnessError::Replay("intent period must be positive".into()));
    }
    let dms = DmsConfig {
        tv_dist_thresh: scenario.tv_dist_thresh,
        recognition_method: method,
        lane_width: scenario.lane_width,
    };
    dms.validate().map_err(|e| HarnessError::Replay(e.to_string()))?;

    let mut order: Vec<usize> = (0..bsms.len()).collect();
    order.sort_by_key(|&i| bsms[i].timestamp_ms);

    let mut map = LocalObjectMap::new(scenario.staleness_timeout);
    let mut ph = PathHistoryBuffer::new(scenario.ph_max_length, scenario.ph_min_spacing);
    let mut next_intent = scenario.intent_period_ms;
    let mut events = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let t = bsms[order[k]].timestamp_ms;
        while k < order.len() && bsms[order[k]].timestamp_ms == t {
            let index = order[k];
            let b = bsms[index];
            if b.sender_id == scenario.hv_id {
                map.set_host_state(b);
                ph.append_sample(PathHistoryPoint {
                    x: b.x,
                    y: b.y,
                    heading: b.heading,
                    speed: b.speed,
                    yaw_rate: b.yaw_rate,
                    timestamp_ms: b.timestamp_ms,
                })
                .map_err(|e| HarnessError::Replay(format!("trace record {index}: {e}")))?;
            } else {
                map.update(b, t);
            }
            k += 1;
        }
        map.expire_stale(t);
        if t < next_intent {
            continue;
        }
        let Some(hv) = map.host_state().copied() else {
            continue;
        };
        while next_intent <= t {
            next_intent += scenario.intent_period_ms;
        }
        let r = recognize(&dms, &map, &hv, &ph, GapMeasure::PathHistory(&ph), scenario.direction);
        let expected = annotations.and_then(|a| a.iter().find(|a| a.t_ms == t).copied());
        events.push(ReplayEvent {
            t_ms: t,
            direction: scenario.direction,
            predicted: r.tv_id,
            candidates: r.candidates_considered,
            outcome: expected.map(|a| classify(r.tv_id, a.expected_tv)),
            expected,
        });
    }
    Ok(events)
}

pub const REPLAY_COLUMNS: [&str; 6] = ["t_ms", "predicted", "expected", "gap", "outcome", "candidates"];

#[derive(Serialize)]
struct ReplayRow {
    t_ms: u64,
    predicted: Option<VehicleId>,
    expected: Option<VehicleId>,
    gap: Option<f64>,
    outcome: Option<&'static str>,
    candidates: usize,
}

pub fn write_replay_csv<W: io::Write>(w: W, events: &[ReplayEvent]) -> Result<(), csv::Error> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(REPLAY_COLUMNS)?;
    for e in events {
        wr.serialize(ReplayRow {
            t_ms: e.t_ms,
            predicted: e.predicted,
            expected: e.expected.and_then(|a| a.expected_tv),
            gap: e.expected.and_then(|a| a.gap),
            outcome: e.outcome.map(Outcome::as_str),
            candidates: e.candidates,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn count_outcomes<'a>(events: impl IntoIterator<Item = &'a ReplayEvent>) -> OutcomeCounts {
    let mut c = OutcomeCounts::default();
    for o in events.into_iter().filter_map(|e| e.outcome) {
        c.add(o);
    }
    c
}

/// Outcome tally of one replay pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub mode: Mode,
    pub intents: usize,
    pub counts: OutcomeCounts,
    pub percentages: Percentages,
}

impl ReplaySummary {
    pub fn new(mode: Mode, events: &[ReplayEvent]) -> Self {
        let counts = count_outcomes(events);
        Self {
            mode,
            intents: events.len(),
            percentages: counts.percentages(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub scenario: ReplayScenario,
    pub results: Vec<ReplaySummary>,
}

/// Parameters of the synthetic curved-road benchmark: a host on the outer
/// lane of a two-lane circular arc, a target vehicle on the inner lane whose
/// trailing distance sweeps between `tv_gap_min` and `tv_gap_max`, and a
/// follower in the host's own lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkParams {
    pub radius: f64,
    pub lane_width: f64,
    pub hv_speed: f64,
    pub duration: f64,
    pub intent_period: f64,
    pub tv_gap_min: f64,
    pub tv_gap_max: f64,
    pub follower_gap: f64,
    pub dt: f64,
    pub tv_dist_thresh: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        Self {
            radius: 40.0,
            lane_width: 3.5,
            hv_speed: 30.0,
            duration: 240.0,
            intent_period: 10.0,
            tv_gap_min: 60.0,
            tv_gap_max: 230.0,
            follower_gap: 40.0,
            dt: 0.1,
            tv_dist_thresh: 300.0,
        }
    }
}

pub struct BenchmarkTrace {
    pub bsms: Vec<Bsm>,
    pub annotations: Vec<Annotation>,
}

/// Simulates the benchmark and records every vehicle's BSM each tick, plus
/// the true target vehicle at every intent boundary.
pub fn generate_benchmark(p: &BenchmarkParams) -> Result<BenchmarkTrace, HarnessError> {
    let track = build_ring_track(p.radius, 2, p.lane_width)
        .map_err(|e| HarnessError::Replay(format!("benchmark track: {e}")))?;
    let bad = |what: &str| Err(HarnessError::Replay(format!("benchmark: {what}")));
    if !(p.dt > 0.0) || !(p.duration > 0.0) || !(p.intent_period > 0.0) || !(p.hv_speed > 0.0) {
        return bad("dt, duration, intent period and speed must be positive");
    }
    if !(0.0 < p.tv_gap_min && p.tv_gap_min <= p.tv_gap_max && p.tv_gap_max < track.total_length) {
        return bad("target gaps must lie within one lap");
    }
    let hv_rate = p.hv_speed / track.path_scale(0.0, p.lane_width);
    let amp = 0.5 * (p.tv_gap_max - p.tv_gap_min);
    let omega = std::f64::consts::TAU / p.duration;
    // gap(t) = mid - amp cos(omega t): starts at the minimum, peaks halfway
    let tv_speed = |t: f64| hv_rate - amp * omega * (omega * t).sin();

    let host = VehicleState::new(VehicleId(0), TrackPosition::new(0.0, 1, 0.0), p.hv_speed, 3.5, p.hv_speed);
    let mut tv = VehicleState::new(VehicleId(1), TrackPosition::new(track.wrap_s(-p.tv_gap_min), 0, 0.0), tv_speed(0.0), 20.0, tv_speed(0.0));
    tv.accel_cap = 20.0;
    let follower = VehicleState::new(
        VehicleId(2),
        TrackPosition::new(track.wrap_s(-p.follower_gap), 1, 0.0),
        p.hv_speed,
        3.5,
        p.hv_speed,
    );
    let mut world = World::from_vehicles(&track, vec![host, tv, follower], VehicleId(0), p.dt, KraussParams::default(), 0);

    let ticks = (p.duration / p.dt).round() as u64;
    let period_ms = (p.intent_period * 1000.0).round() as u64;
    let mut bsms = Vec::with_capacity(3 * ticks as usize);
    let mut annotations = Vec::new();
    for _ in 0..ticks {
        let t = world.time_ms();
        for v in &world.vehicles {
            bsms.push(bsm_from_state(&track, v, t));
        }
        if t > 0 && t.is_multiple_of(period_ms) {
            let expected_tv = ground_truth_tv(&world, &track, Direction::Left, p.tv_dist_thresh);
            let gap = expected_tv.map(|id| track.longitudinal_gap(world.host().pos.s, world.vehicle(id).pos.s));
            annotations.push(Annotation { t_ms: t, expected_tv, gap });
        }
        let next = world.time() + p.dt;
        world.vehicle_mut(VehicleId(1)).v_max = tv_speed(next);
        world
            .step(&track)
            .map_err(|e| HarnessError::Replay(format!("benchmark simulation: {e}")))?;
    }
    Ok(BenchmarkTrace { bsms, annotations })
}
