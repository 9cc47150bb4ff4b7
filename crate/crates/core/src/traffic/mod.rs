//! Fixed-step vehicle dynamics on a ring track.
//!
//! Every vehicle follows its same-lane leader with the Krauss model. Only the
//! host vehicle changes lanes; while a maneuver executes it occupies both the
//! lane it leaves and the lane it enters, so followers in either lane keep a
//! safe distance to it. Remote vehicles stay in their lanes.

mod intent;
mod krauss;
mod maneuver;

pub use intent::IntentScheduler;
pub use krauss::{krauss_fixed_point_speed, krauss_safe_speed, KraussParams};
pub use maneuver::{execute_lane_change, LaneChangeManeuver, ManeuverStatus};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_heading, wrap_angle, TrackPosition, TrackSpec, WorldPose};
use crate::types::{Direction, TurnSignal, VehicleId};

/// Gap below which two same-lane vehicles are considered overlapping.
const OVERLAP_TOL: f64 = -1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
    #[error(
        "simulation integrity fault at tick {tick}: vehicle {follower} overlaps leader {leader} (gap {gap:.3} m)"
    )]
    Overlap {
        tick: u64,
        follower: VehicleId,
        leader: VehicleId,
        gap: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    DmsPh,
    DmsLateral,
    NoDms,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::DmsPh, Mode::DmsLateral, Mode::NoDms];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::DmsPh => "dms_ph",
            Mode::DmsLateral => "dms_lateral",
            Mode::NoDms => "no_dms",
        }
    }

    pub fn uses_dms(self) -> bool {
        !matches!(self, Mode::NoDms)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dms_ph" => Ok(Mode::DmsPh),
            "dms_lateral" => Ok(Mode::DmsLateral),
            "no_dms" => Ok(Mode::NoDms),
            other => Err(format!(
                "unknown mode `{other}` (expected dms_ph, dms_lateral or no_dms)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedClass {
    pub v_max: f64,
    pub accel: f64,
}

/// Scenario parameters. Defaults reproduce the 23-vehicle, 20000 s setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_vehicles: usize,
    pub duration: f64,
    pub dt: f64,
    pub speed_classes: Vec<SpeedClass>,
    pub intent_period: f64,
    pub tv_dist_thresh: f64,
    pub mode: Mode,
    pub brake_delta: f64,
    /// Seconds the reduced speed is held as a cap after a DIM-triggered brake.
    pub brake_hold: f64,
    pub headway_window: f64,
    pub rng_seed: u64,
    pub bsm_rate: f64,
    pub channel_loss_prob: f64,
    pub reaction_time: f64,
    pub decel_cap: f64,
    pub min_gap: f64,
    pub sigma: f64,
    pub vehicle_length: f64,
    pub lane_change_duration: f64,
    pub staleness_timeout: f64,
    pub ph_max_length: f64,
    pub ph_min_spacing: f64,
    pub headway_time_cap: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 23,
            duration: 20_000.0,
            dt: 0.1,
            speed_classes: vec![
                SpeedClass {
                    v_max: 22.0,
                    accel: 3.5,
                },
                SpeedClass {
                    v_max: 36.0,
                    accel: 7.0,
                },
            ],
            intent_period: 30.0,
            tv_dist_thresh: 50.0,
            mode: Mode::DmsPh,
            brake_delta: 3.0,
            brake_hold: 10.0,
            headway_window: 10.0,
            rng_seed: 1,
            bsm_rate: 10.0,
            channel_loss_prob: 0.0,
            reaction_time: 1.0,
            decel_cap: 4.5,
            min_gap: 2.5,
            sigma: 0.0,
            vehicle_length: 5.0,
            lane_change_duration: 3.0,
            staleness_timeout: 1.0,
            ph_max_length: 300.0,
            ph_min_spacing: 1.0,
            headway_time_cap: 99.0,
        }
    }
}

fn whole_multiple(value: f64, unit: f64) -> Option<u64> {
    let n = (value / unit).round();
    ((value / unit - n).abs() < 1e-6 && n >= 0.0).then_some(n as u64)
}

fn invalid(key: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig {
        key,
        reason: reason.into(),
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) {
            return Err(invalid("sim.dt", "must be > 0"));
        }
        if whole_multiple(self.dt, 0.001).is_none_or(|ms| ms == 0) {
            return Err(invalid("sim.dt", "must be a whole number of milliseconds"));
        }
        if !(self.duration > 0.0) || whole_multiple(self.duration, self.dt).is_none() {
            return Err(invalid("sim.duration", "must be a positive multiple of dt"));
        }
        if self.n_vehicles < 2 {
            return Err(invalid("sim.n_vehicles", "need at least 2 vehicles"));
        }
        if self.speed_classes.is_empty() {
            return Err(invalid("sim.speed_classes", "need at least one class"));
        }
        if self
            .speed_classes
            .iter()
            .any(|c| !(c.v_max > 0.0) || !(c.accel > 0.0))
        {
            return Err(invalid("sim.speed_classes", "v_max and accel must be > 0"));
        }
        if !(self.intent_period > 0.0) || whole_multiple(self.intent_period, self.dt).is_none() {
            return Err(invalid("sim.intent_period", "must be a positive multiple of dt"));
        }
        if !(self.tv_dist_thresh > 0.0) {
            return Err(invalid("sim.tv_dist_thresh", "must be > 0"));
        }
        if !(self.brake_delta >= 0.0) {
            return Err(invalid("sim.brake_delta", "must be >= 0"));
        }
        if !(self.brake_hold >= 0.0) {
            return Err(invalid("sim.brake_hold", "must be >= 0"));
        }
        if !(self.headway_window > 0.0) {
            return Err(invalid("sim.headway_window", "must be > 0"));
        }
        if !(self.bsm_rate > 0.0) || whole_multiple(1.0 / self.bsm_rate, self.dt).is_none_or(|n| n == 0) {
            return Err(invalid("sim.bsm_rate", "BSM interval must be a positive multiple of dt"));
        }
        if !(0.0..=1.0).contains(&self.channel_loss_prob) {
            return Err(invalid("sim.channel_loss_prob", "must lie in [0, 1]"));
        }
        if !(self.reaction_time > 0.0) {
            return Err(invalid("sim.reaction_time", "must be > 0"));
        }
        if !(self.decel_cap > 0.0) {
            return Err(invalid("sim.decel_cap", "must be > 0"));
        }
        if !(self.min_gap >= 0.0) {
            return Err(invalid("sim.min_gap", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(invalid("sim.sigma", "must lie in [0, 1]"));
        }
        if !(self.vehicle_length > 0.0) {
            return Err(invalid("sim.vehicle_length", "must be > 0"));
        }
        if !(self.lane_change_duration > 0.0) {
            return Err(invalid("sim.lane_change_duration", "must be > 0"));
        }
        if !(self.staleness_timeout > 0.0) {
            return Err(invalid("sim.staleness_timeout", "must be > 0"));
        }
        if !(self.ph_max_length > 0.0) {
            return Err(invalid("sim.ph_max_length", "must be > 0"));
        }
        if !(self.ph_min_spacing >= 0.0) || self.ph_min_spacing >= self.ph_max_length {
            return Err(invalid("sim.ph_min_spacing", "must be >= 0 and below ph_max_length"));
        }
        if !(self.headway_time_cap > 0.0) {
            return Err(invalid("sim.headway_time_cap", "must be > 0"));
        }
        Ok(())
    }

    pub fn dt_ms(&self) -> u64 {
        (self.dt * 1000.0).round() as u64
    }

    pub fn total_ticks(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn intent_period_ms(&self) -> u64 {
        (self.intent_period * 1000.0).round() as u64
    }

    pub fn bsm_interval_ticks(&self) -> u64 {
        (1.0 / (self.bsm_rate * self.dt)).round() as u64
    }

    pub fn headway_window_ticks(&self) -> u64 {
        (self.headway_window / self.dt).round() as u64
    }

    pub fn krauss(&self) -> KraussParams {
        KraussParams {
            reaction_time: self.reaction_time,
            decel_cap: self.decel_cap,
            min_gap: self.min_gap,
            sigma: self.sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedHold {
    pub cap: f64,
    pub until_tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub pos: TrackPosition,
    /// Along-lane speed, m/s.
    pub speed: f64,
    pub accel_cap: f64,
    pub decel_cap: f64,
    pub v_max: f64,
    pub heading: f64,
    pub yaw_rate: f64,
    pub turn_signal: TurnSignal,
    pub length: f64,
    /// Lateral speed over the last tick, positive toward higher lane index.
    pub lateral_speed: f64,
    /// Longitudinal acceleration over the last tick.
    pub accel: f64,
    pub speed_hold: Option<SpeedHold>,
}

impl VehicleState {
    pub fn new(id: VehicleId, pos: TrackPosition, v_max: f64, accel_cap: f64, speed: f64) -> Self {
        Self {
            id,
            pos,
            speed,
            accel_cap,
            decel_cap: 4.5,
            v_max,
            heading: 0.0,
            yaw_rate: 0.0,
            turn_signal: TurnSignal::Off,
            length: 5.0,
            lateral_speed: 0.0,
            accel: 0.0,
            speed_hold: None,
        }
    }

    /// Lateral distance right of lane 0.
    pub fn lateral(&self, lane_width: f64) -> f64 {
        self.pos.lane as f64 * lane_width + self.pos.lateral_offset
    }

    pub fn ground_speed(&self) -> f64 {
        self.speed.hypot(self.lateral_speed)
    }

    /// World position with the current motion heading.
    pub fn pose(&self, track: &TrackSpec) -> WorldPose {
        let p = track.pose_at(self.pos.s, self.lateral(track.lane_width));
        WorldPose::new(p.x, p.y, self.heading)
    }
}

/// Reduces a vehicle's speed by `brake_delta`, saturating at standstill.
pub fn apply_brake_reaction(tv: &VehicleState, brake_delta: f64) -> VehicleState {
    let mut out = tv.clone();
    out.speed = (tv.speed - brake_delta).max(0.0);
    out
}

/// Motion heading: lane tangent rotated by the lateral motion over the tick.
fn motion_heading(track: &TrackSpec, v: &VehicleState) -> f64 {
    let tangent = track.pose_at(v.pos.s, v.lateral(track.lane_width)).heading;
    // rightward lateral motion turns the heading clockwise
    normalize_heading(tangent - v.lateral_speed.atan2(v.speed))
}

#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub completed: Option<LaneChangeManeuver>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub vehicles: Vec<VehicleState>,
    pub host: VehicleId,
    pub tick: u64,
    pub dt: f64,
    pub dt_ms: u64,
    pub krauss: KraussParams,
    pub maneuver: Option<LaneChangeManeuver>,
    rng: ChaCha8Rng,
}

impl World {
    /// Builds a world from explicit vehicle states; vehicle `i` must carry id `i`.
    pub fn from_vehicles(
        track: &TrackSpec,
        mut vehicles: Vec<VehicleState>,
        host: VehicleId,
        dt: f64,
        krauss: KraussParams,
        seed: u64,
    ) -> Self {
        for (i, v) in vehicles.iter_mut().enumerate() {
            assert_eq!(v.id.0 as usize, i, "vehicle ids must match their index");
            v.heading = motion_heading(track, v);
        }
        Self {
            vehicles,
            host,
            tick: 0,
            dt,
            dt_ms: (dt * 1000.0).round() as u64,
            krauss,
            maneuver: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform spacing in arc length, round-robin lanes, alternating speed
    /// classes; vehicle 0 is the host.
    pub fn initial(track: &TrackSpec, config: &SimConfig) -> Self {
        let n = config.n_vehicles;
        let vehicles = (0..n)
            .map(|i| {
                let class = config.speed_classes[i % config.speed_classes.len()];
                let s = track.total_length * i as f64 / n as f64;
                let pos = TrackPosition::new(s, i % track.lane_count, 0.0);
                let mut v = VehicleState::new(VehicleId(i as u32), pos, class.v_max, class.accel, class.v_max);
                v.decel_cap = config.decel_cap;
                v.length = config.vehicle_length;
                v
            })
            .collect();
        Self::from_vehicles(track, vehicles, VehicleId(0), config.dt, config.krauss(), config.rng_seed)
    }

    pub fn time_ms(&self) -> u64 {
        self.tick * self.dt_ms
    }

    pub fn time(&self) -> f64 {
        self.time_ms() as f64 / 1000.0
    }

    pub fn host(&self) -> &VehicleState {
        &self.vehicles[self.host.0 as usize]
    }

    pub fn vehicle(&self, id: VehicleId) -> &VehicleState {
        &self.vehicles[id.0 as usize]
    }

    pub fn vehicle_mut(&mut self, id: VehicleId) -> &mut VehicleState {
        &mut self.vehicles[id.0 as usize]
    }

    /// Lanes each vehicle occupies; a vehicle mid-maneuver occupies two.
    fn occupancy(&self, lane_count: usize) -> Vec<Vec<usize>> {
        let mut lanes = vec![Vec::new(); lane_count];
        for (i, v) in self.vehicles.iter().enumerate() {
            lanes[v.pos.lane].push(i);
        }
        if let Some(m) = self.maneuver.filter(|m| m.status == ManeuverStatus::Executing) {
            lanes[m.to_lane].push(m.vehicle_id.0 as usize);
        }
        for lane in &mut lanes {
            lane.sort_by(|&a, &b| {
                self.vehicles[a]
                    .pos
                    .s
                    .total_cmp(&self.vehicles[b].pos.s)
                    .then(a.cmp(&b))
            });
        }
        lanes
    }

    /// Nearest leader and bumper gap for every vehicle, over all lanes it occupies.
    pub fn leaders(&self, track: &TrackSpec) -> Vec<Option<(usize, f64)>> {
        let mut out: Vec<Option<(usize, f64)>> = vec![None; self.vehicles.len()];
        for lane in self.occupancy(track.lane_count) {
            let n = lane.len();
            if n < 2 {
                continue;
            }
            for k in 0..n {
                let i = lane[k];
                let j = lane[(k + 1) % n];
                let gap = track.longitudinal_gap(self.vehicles[j].pos.s, self.vehicles[i].pos.s)
                    - self.vehicles[j].length;
                if out[i].is_none_or(|(_, g)| gap < g) {
                    out[i] = Some((j, gap));
                }
            }
        }
        out
    }

    /// Fails if any follower overlaps its leader.
    pub fn check_integrity(&self, track: &TrackSpec) -> Result<(), SimError> {
        for (i, l) in self.leaders(track).into_iter().enumerate() {
            if let Some((j, gap)) = l {
                if gap < OVERLAP_TOL {
                    return Err(SimError::Overlap {
                        tick: self.tick,
                        follower: self.vehicles[i].id,
                        leader: self.vehicles[j].id,
                        gap,
                    });
                }
            }
        }
        Ok(())
    }

    /// Turns on the host's signal and queues a lane change. Returns `false`
    /// when no adjacent lane exists in that direction or one is already queued.
    pub fn signal_intent(&mut self, track: &TrackSpec, direction: Direction, duration: f64) -> bool {
        if self.maneuver.is_some_and(|m| m.is_active()) {
            return false;
        }
        let host = self.host();
        let Some(m) = LaneChangeManeuver::pending(
            host.id,
            host.pos.lane,
            direction,
            track.lane_count,
            self.time(),
            duration,
        ) else {
            return false;
        };
        self.vehicle_mut(m.vehicle_id).turn_signal = direction.into();
        self.maneuver = Some(m);
        true
    }

    /// Starts a pending maneuver unless the target lane is physically occupied
    /// alongside the host, in which case it is aborted and the signal cleared.
    pub fn start_pending_maneuver(&mut self, track: &TrackSpec) -> Option<ManeuverStatus> {
        let mut m = self.maneuver.filter(|m| m.status == ManeuverStatus::Pending)?;
        let hv = self.vehicle(m.vehicle_id);
        let blocked = self.vehicles.iter().any(|v| {
            v.id != hv.id && v.pos.lane == m.to_lane && {
                let ahead = track.longitudinal_gap(v.pos.s, hv.pos.s) - v.length;
                let behind = track.longitudinal_gap(hv.pos.s, v.pos.s) - hv.length;
                ahead < 0.0 || behind < 0.0
            }
        });
        m.status = if blocked {
            ManeuverStatus::Aborted
        } else {
            ManeuverStatus::Executing
        };
        if blocked {
            self.vehicle_mut(m.vehicle_id).turn_signal = TurnSignal::Off;
        }
        self.maneuver = Some(m);
        Some(m.status)
    }

    /// Brakes a vehicle by `brake_delta` and holds the reduced speed as a cap
    /// for `hold_ticks`.
    pub fn brake(&mut self, id: VehicleId, brake_delta: f64, hold_ticks: u64) {
        let tick = self.tick;
        let v = self.vehicle_mut(id);
        *v = apply_brake_reaction(v, brake_delta);
        if hold_ticks > 0 {
            v.speed_hold = Some(SpeedHold {
                cap: v.speed,
                until_tick: tick + hold_ticks,
            });
        }
    }

    /// Advances every vehicle by one tick.
    pub fn step(&mut self, track: &TrackSpec) -> Result<StepReport, SimError> {
        let dt = self.dt;
        let leaders = self.leaders(track);
        let n = self.vehicles.len();
        let next_tick = self.tick + 1;

        let mut v_new = vec![0.0; n];
        for i in 0..n {
            let v = &self.vehicles[i];
            let mut target = v.v_max.min(v.speed + v.accel_cap * dt);
            if let Some((j, gap)) = leaders[i] {
                if gap < OVERLAP_TOL {
                    return Err(SimError::Overlap {
                        tick: self.tick,
                        follower: v.id,
                        leader: self.vehicles[j].id,
                        gap,
                    });
                }
                let eff = (gap - self.krauss.min_gap).max(0.0);
                let safe = krauss_fixed_point_speed(
                    self.vehicles[j].speed,
                    eff,
                    v.decel_cap,
                    self.krauss.reaction_time,
                );
                target = target.min(safe);
            }
            if let Some(hold) = v.speed_hold {
                if next_tick <= hold.until_tick {
                    target = target.min(hold.cap);
                }
            }
            if self.krauss.sigma > 0.0 {
                let u: f64 = self.rng.random();
                target -= self.krauss.sigma * v.accel_cap * dt * u;
            }
            v_new[i] = target.max(0.0);
        }

        // arc-length advance; outer lanes cover less arc length on curves
        let lat: Vec<f64> = self.vehicles.iter().map(|v| v.lateral(track.lane_width)).collect();
        let mut ds: Vec<f64> = (0..n)
            .map(|i| track.arc_advance(self.vehicles[i].pos.s, lat[i], v_new[i] * dt))
            .collect();

        // hard no-overlap bound given each leader's own advance
        for _ in 0..(2 * n + 2) {
            let mut changed = false;
            for i in 0..n {
                if let Some((j, gap)) = leaders[i] {
                    let bound = (gap + ds[j]).max(0.0);
                    if ds[i] > bound {
                        ds[i] = bound;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let mut report = StepReport::default();
        for i in 0..n {
            let v = &mut self.vehicles[i];
            let speed = track.ground_length(v.pos.s, lat[i], ds[i]) / dt;
            v.accel = (speed - v.speed) / dt;
            v.speed = speed;
            v.pos.s = track.wrap_s(v.pos.s + ds[i]);
            if v.speed_hold.is_some_and(|h| next_tick >= h.until_tick) {
                v.speed_hold = None;
            }
            v.lateral_speed = 0.0;
        }

        if let Some(m) = self.maneuver.as_mut().filter(|m| m.status == ManeuverStatus::Executing) {
            let v = &mut self.vehicles[m.vehicle_id.0 as usize];
            v.lateral_speed = execute_lane_change(v, m, track.lane_width, dt);
            if m.status == ManeuverStatus::Done {
                report.completed = Some(*m);
            }
        }

        for v in &mut self.vehicles {
            let heading = motion_heading(track, v);
            v.yaw_rate = wrap_angle(heading - v.heading) / dt;
            v.heading = heading;
        }

        self.tick = next_tick;
        self.check_integrity(track)?;
        Ok(report)
    }
}
