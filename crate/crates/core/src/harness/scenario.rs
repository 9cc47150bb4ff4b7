use crate::dms::{
    recognize, ApplicationDetector, CandidateDiagnostic, DimLatch, DmsConfig, GapMeasure, RecognitionMethod,
    RecognitionResult,
};
use crate::geometry::TrackSpec;
use crate::metrics::{classify, ground_truth_tv, HeadwayRecord, HeadwayRecorder, RecognitionEvent};
use crate::path_history::{PathHistoryBuffer, PathHistoryPoint};
use crate::traffic::{IntentScheduler, ManeuverStatus, Mode, SimConfig, SimError, World};
use crate::types::{Direction, VehicleId};
use crate::v2x::{bsm_from_state, Bsm, Channel, LocalObjectMap};

/// Recognition method used by a mode; `None` for the no-DMS baseline.
pub fn method_for(mode: Mode) -> Option<RecognitionMethod> {
    match mode {
        Mode::DmsPh => Some(RecognitionMethod::PathHistory),
        Mode::DmsLateral => Some(RecognitionMethod::LateralOnly),
        Mode::NoDms => None,
    }
}

/// Per-candidate diagnostics for one intent.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentDiagnostics {
    pub t_ms: u64,
    pub candidates: Vec<CandidateDiagnostic>,
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioOutput {
    pub events: Vec<RecognitionEvent>,
    pub diagnostics: Vec<IntentDiagnostics>,
    pub headway: Vec<HeadwayRecord>,
    pub dims_sent: u64,
    pub dims_delivered: u64,
    pub lane_changes: u64,
    pub aborted_maneuvers: u64,
    pub bsms_delivered: u64,
    /// Oldest map entry seen at any recognition instant, ms.
    pub max_map_age_ms: u64,
    pub ticks: u64,
}

fn ph_point(b: &Bsm) -> PathHistoryPoint {
    PathHistoryPoint {
        x: b.x,
        y: b.y,
        heading: b.heading,
        speed: b.speed,
        yaw_rate: b.yaw_rate,
        timestamp_ms: b.timestamp_ms,
    }
}

/// Host-side state of the messenger: object map, path history and latches.
#[derive(Debug, Clone)]
pub struct HostContext {
    pub map: LocalObjectMap,
    pub ph: PathHistoryBuffer,
    pub detector: ApplicationDetector,
    pub latch: DimLatch,
}

impl HostContext {
    pub fn new(config: &SimConfig) -> Self {
        Self {
            map: LocalObjectMap::new(config.staleness_timeout),
            ph: PathHistoryBuffer::new(config.ph_max_length, config.ph_min_spacing),
            detector: ApplicationDetector::new(),
            latch: DimLatch::new(),
        }
    }

    /// Records the host's own BSM in the map and the path history.
    pub fn observe_self(&mut self, bsm: Bsm) {
        self.map.set_host_state(bsm);
        // timestamps come from the tick counter and never repeat
        self.ph
            .append_sample(ph_point(&bsm))
            .expect("host samples are finite and time-ordered");
    }

    pub fn recognize(&self, config: &DmsConfig, measure: GapMeasure<'_>, direction: Direction) -> RecognitionResult {
        let hv = self.map.host_state().expect("host state observed");
        recognize(config, &self.map, hv, &self.ph, measure, direction)
    }
}

/// Runs one closed-loop scenario for `config.duration` seconds.
pub fn run_scenario(track: &TrackSpec, config: &SimConfig) -> Result<ScenarioOutput, SimError> {
    config.validate()?;
    let mut world = World::initial(track, config);
    run_world(track, config, &mut world)
}

/// Runs the tick loop on a prepared world.
pub fn run_world(track: &TrackSpec, config: &SimConfig, world: &mut World) -> Result<ScenarioOutput, SimError> {
    let method = method_for(config.mode);
    let mut channel = Channel::new(config.channel_loss_prob, config.rng_seed);
    let mut host = HostContext::new(config);
    let mut scheduler = IntentScheduler::new(config.intent_period_ms());
    let mut headway = HeadwayRecorder::new(config.headway_window_ticks(), config.headway_time_cap);
    let bsm_every = config.bsm_interval_ticks();
    let hold_ticks = (config.brake_hold / config.dt).round() as u64;
    let receivers: Vec<VehicleId> = world.vehicles.iter().map(|v| v.id).collect();
    let hv_id = world.host;
    let mut out = ScenarioOutput::default();

    for _ in 0..config.total_ticks() {
        let t = world.time_ms();
        let hv_lane = world.host().pos.lane;
        if let Some(dir) = scheduler.poll(t, hv_lane, track.lane_count) {
            world.signal_intent(track, dir, config.lane_change_duration);
        }

        if world.tick.is_multiple_of(bsm_every) {
            let bsms: Vec<Bsm> = world.vehicles.iter().map(|v| bsm_from_state(track, v, t)).collect();
            let map = &mut host.map;
            out.bsms_delivered += channel.broadcast_bsms(&bsms, &receivers, |rx, b| {
                if rx == hv_id {
                    map.update(*b, t);
                }
            }) as u64;
            host.observe_self(bsms[hv_id.0 as usize]);
        }
        host.map.expire_stale(t);

        let executing = world.maneuver.is_some_and(|m| m.status == ManeuverStatus::Executing);
        let hv_bsm = *host.map.host_state().expect("host state observed");
        if let Some(intent) = host.detector.detect(&hv_bsm, executing, t) {
            let result = method.map(|recognition_method| {
                let dms = DmsConfig {
                    tv_dist_thresh: config.tv_dist_thresh,
                    recognition_method,
                    lane_width: track.lane_width,
                };
                host.recognize(&dms, GapMeasure::Track(track), intent.direction)
            });
            let predicted = result.as_ref().and_then(|r| r.tv_id);
            let truth = ground_truth_tv(world, track, intent.direction, config.tv_dist_thresh);
            out.max_map_age_ms = out.max_map_age_ms.max(host.map.max_age_ms(t).unwrap_or(0));
            out.events.push(RecognitionEvent {
                t_ms: t,
                direction: intent.direction,
                predicted,
                truth,
                outcome: classify(predicted, truth),
                candidates: result.as_ref().map_or(0, |r| r.candidates_considered),
            });
            if let Some(r) = result {
                out.diagnostics.push(IntentDiagnostics {
                    t_ms: t,
                    candidates: r.diagnostics,
                });
            }
            if let Some(dim) = host.latch.issue(&intent, predicted, t) {
                out.dims_sent += 1;
                if channel.unicast_dim(&dim) {
                    out.dims_delivered += 1;
                    world.brake(dim.target_id, config.brake_delta, hold_ticks);
                }
            }
            if world.start_pending_maneuver(track) == Some(ManeuverStatus::Aborted) {
                out.aborted_maneuvers += 1;
            }
        }

        let report = world.step(track)?;
        out.ticks += 1;
        if report.completed.is_some() {
            out.lane_changes += 1;
            headway.start(world, track);
        }
        headway.sample(world, track);
    }
    out.headway = headway.records;
    Ok(out)
}
