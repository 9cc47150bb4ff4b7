//! Host vehicle path history.
//!
//! A bounded trail of the host's recent poses, sampled at a minimum spacing
//! and trimmed to a maximum chord length. Two queries drive target vehicle
//! recognition: the history point closest to a remote vehicle, and the net
//! number of lane changes the host made since that point.
//!
//! Lane changes are recovered by separating road curvature from the host's
//! own lateral motion. A kinematic lane change shows up as a step in heading
//! that the chord between samples only half follows, while road curvature
//! turns chord and heading together. Per interval the heading step is
//! estimated from that asymmetry, with a two-piece arc model where the
//! interval straddles a change in road curvature. The accumulated deviation
//! is integrated with speed into a lateral displacement, and every half-lane
//! crossing counts one lane.

use std::collections::VecDeque;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::wrap_angle;

/// Lateral displacement beyond half a lane needed, in addition, before a
/// lane change is counted.
pub const LANE_SHIFT_HYSTERESIS_M: f64 = 0.5;
/// Curvature difference (1/m) up to which an interval counts as part of its
/// neighbour's arc; covers the drift of a lane change through a curve.
const CURVATURE_MATCH: f64 = 3e-4;
/// Curvature difference (1/m) up to which two intervals either side of a
/// disturbed one are taken to lie on the same arc.
const CURVATURE_PAIR_MATCH: f64 = 1e-3;
/// Smallest heading step (rad) taken as the start or end of a lateral
/// maneuver; smaller residuals are road-model noise.
const MIN_HEADING_JUMP: f64 = 0.012;
/// Intervals either side used when estimating one interval's heading jump.
const JUMP_CONTEXT: usize = 4;
/// Floor on speed (m/s) when converting between heading and lateral speed.
const MIN_SPEED: f64 = 0.1;
/// Longest time a lateral maneuver may hold a heading deviation.
const MAX_MANEUVER_MS: u64 = 5_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathHistoryError {
    #[error("path history is empty")]
    Empty,
    #[error("timestamp {got} ms does not follow newest sample at {newest} ms")]
    NonMonotone { newest: u64, got: u64 },
    #[error("non-finite path history sample")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathHistoryPoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub yaw_rate: f64,
    pub timestamp_ms: u64,
}

impl PathHistoryPoint {
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }

    fn is_finite(&self) -> bool {
        [self.x, self.y, self.heading, self.speed, self.yaw_rate]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct PathHistoryBuffer {
    points: VecDeque<PathHistoryPoint>,
    max_path_length: f64,
    min_sample_spacing: f64,
    /// Sum of chord lengths between consecutive kept points.
    chord_length: f64,
    newest_ts: Option<u64>,
}

impl PathHistoryBuffer {
    pub fn new(max_path_length: f64, min_sample_spacing: f64) -> Self {
        Self {
            points: VecDeque::new(),
            max_path_length,
            min_sample_spacing,
            chord_length: 0.0,
            newest_ts: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &VecDeque<PathHistoryPoint> {
        &self.points
    }

    pub fn point(&self, index: usize) -> Option<&PathHistoryPoint> {
        self.points.get(index)
    }

    pub fn newest(&self) -> Option<&PathHistoryPoint> {
        self.points.back()
    }

    pub fn chord_length(&self) -> f64 {
        self.chord_length
    }

    pub fn max_path_length(&self) -> f64 {
        self.max_path_length
    }

    /// Adds a sample. Samples closer than the minimum spacing to the newest
    /// kept point are skipped (returns `Ok(false)`); the oldest points are
    /// trimmed once the retained chord length exceeds the maximum.
    pub fn append_sample(&mut self, point: PathHistoryPoint) -> Result<bool, PathHistoryError> {
        if !point.is_finite() {
            return Err(PathHistoryError::NonFinite);
        }
        if let Some(newest) = self.newest_ts {
            if point.timestamp_ms <= newest {
                return Err(PathHistoryError::NonMonotone {
                    newest,
                    got: point.timestamp_ms,
                });
            }
        }
        self.newest_ts = Some(point.timestamp_ms);
        if let Some(last) = self.points.back() {
            let d = last.distance_to(point.x, point.y);
            if d < self.min_sample_spacing {
                return Ok(false);
            }
            self.chord_length += d;
        }
        self.points.push_back(point);
        while self.chord_length > self.max_path_length && self.points.len() > 1 {
            let old = self.points.pop_front().expect("len > 1");
            let next = self.points.front().expect("len >= 1");
            self.chord_length -= old.distance_to(next.x, next.y);
        }
        if self.points.len() == 1 {
            self.chord_length = 0.0;
        }
        Ok(true)
    }

    /// Index of the point nearest to `(x, y)`; ties go to the newer point.
    pub fn closest_point(&self, x: f64, y: f64) -> Result<usize, PathHistoryError> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            let d = p.distance_to(x, y);
            if best.is_none_or(|(_, bd)| d <= bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i).ok_or(PathHistoryError::Empty)
    }

    /// Signed perpendicular distance from the heading ray of point `index` to
    /// `(x, y)`; positive to the left of the heading.
    pub fn lateral_offset_at(&self, index: usize, x: f64, y: f64) -> f64 {
        let p = &self.points[index];
        let (dx, dy) = (x - p.x, y - p.y);
        p.heading.cos() * dy - p.heading.sin() * dx
    }

    /// Signed distance of `(x, y)` along the heading of point `index`.
    pub fn longitudinal_offset_at(&self, index: usize, x: f64, y: f64) -> f64 {
        let p = &self.points[index];
        p.heading.cos() * (x - p.x) + p.heading.sin() * (y - p.y)
    }

    /// Chord length from point `index` to the newest point.
    pub fn path_length_since(&self, index: usize) -> f64 {
        self.points
            .iter()
            .skip(index)
            .zip(self.points.iter().skip(index + 1))
            .map(|(a, b)| a.distance_to(b.x, b.y))
            .sum()
    }

    /// Net lane changes between point `from_index` and the newest point,
    /// positive for net leftward movement.
    pub fn lane_shift_since(&self, from_index: usize, lane_width: f64) -> i32 {
        let n = self.points.len();
        if n < 2 || from_index + 1 >= n {
            return 0;
        }
        let steps = self.interval_steps();
        let jumps = heading_jumps(&steps);

        let trigger = lane_width / 2.0 + LANE_SHIFT_HYSTERESIS_M / 2.0;
        // a maneuver holds its lateral speed; the heading deviation that
        // produces it shrinks as the host speeds up and grows as it slows
        let mut lateral_speed: f64 = 0.0;
        // first point inside the current maneuver and its deviation there
        let mut maneuver_from = 0;
        let mut reference_deviation = 0.0;
        let mut lateral = 0.0;
        let mut shift = 0;
        // (onset time, lateral, shift) when the current deviation began
        let mut onset: Option<(u64, f64, i32)> = None;
        // the deviation state is tracked from the oldest point so that a
        // window opening mid-maneuver starts with the right deviation
        for (k, step) in steps.iter().enumerate() {
            let jump = if lateral_speed == 0.0 {
                jumps[k]
            } else {
                self.drift_free_jump(&steps, k, lateral_speed, maneuver_from, reference_deviation)
            };
            let t = self.points[k + 1].timestamp_ms;
            if jump.abs() >= MIN_HEADING_JUMP {
                let speed = self.points[k + 1].speed.max(MIN_SPEED);
                let before = (lateral_speed / speed).clamp(-1.0, 1.0).asin();
                let deviation = before + jump;
                let reverses = jump.signum() != before.signum() && jump.abs() >= 0.5 * before.abs();
                if deviation.abs() < MIN_HEADING_JUMP || (reverses && deviation.abs() < 0.75 * before.abs()) {
                    // a step cancelling most of the deviation ends the maneuver
                    lateral_speed = 0.0;
                    onset = None;
                } else {
                    lateral_speed = speed * deviation.sin();
                    maneuver_from = k + 1;
                    reference_deviation = deviation;
                    // a reversal runs straight into a maneuver the other way
                    if reverses || onset.is_none() {
                        onset = Some((self.points[k].timestamp_ms, lateral, shift));
                    }
                }
            }
            if let Some((t0, lat0, shift0)) = onset {
                // a deviation that never returns is model error, not a maneuver
                if t - t0 > MAX_MANEUVER_MS {
                    lateral_speed = 0.0;
                    onset = None;
                    if k >= from_index {
                        lateral = lat0;
                        shift = shift0;
                    }
                }
            }
            if k < from_index {
                continue;
            }
            lateral += lateral_speed * step.dt;
            if lateral > trigger {
                shift += 1;
                lateral -= lane_width;
            } else if lateral < -trigger {
                shift -= 1;
                lateral += lane_width;
            }
        }
        shift
    }

    /// Heading jump of interval `k` with the deviation drift that a held
    /// lateral speed produces under changing speed taken out of the intervals
    /// around it.
    fn drift_free_jump(
        &self,
        steps: &[IntervalStep],
        k: usize,
        lateral_speed: f64,
        maneuver_from: usize,
        reference_deviation: f64,
    ) -> f64 {
        let drift = |i: usize| {
            if i < maneuver_from {
                return 0.0;
            }
            let speed = self.points[i].speed.max(MIN_SPEED);
            (lateral_speed / speed).clamp(-1.0, 1.0).asin() - reference_deviation
        };
        let lo = k.saturating_sub(JUMP_CONTEXT);
        let hi = (k + JUMP_CONTEXT + 1).min(steps.len());
        let window: Vec<IntervalStep> = (lo..hi).map(|j| steps[j].without_drift(drift(j + 1) - drift(j))).collect();
        heading_jumps(&window)[k - lo]
    }

    fn interval_steps(&self) -> Vec<IntervalStep> {
        self.points
            .iter()
            .zip(self.points.iter().skip(1))
            .map(|(a, b)| {
                IntervalStep::new(
                    a.distance_to(b.x, b.y),
                    wrap_angle(b.heading - a.heading),
                    wrap_angle((b.y - a.y).atan2(b.x - a.x) - a.heading),
                    (b.timestamp_ms - a.timestamp_ms) as f64 / 1000.0,
                )
            })
            .collect()
    }

    /// Writes the buffer as CSV (`x,y,heading,speed,yaw_rate,timestamp_ms`).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        for p in &self.points {
            wr.serialize(p)?;
        }
        wr.flush()?;
        Ok(())
    }
}

struct IntervalStep {
    chord: f64,
    /// Heading at the end relative to the start.
    heading_change: f64,
    /// Chord direction relative to the start heading.
    chord_angle: f64,
    /// Road curvature assuming the interval is a single circular arc.
    curvature: f64,
    dt: f64,
}

impl IntervalStep {
    fn new(chord: f64, heading_change: f64, chord_angle: f64, dt: f64) -> Self {
        // on a circular arc the chord bisects the turn
        let road_turn = 2.0 * (heading_change - chord_angle);
        let arc_length = arc_from_chord(chord, road_turn);
        Self {
            chord,
            heading_change,
            chord_angle,
            curvature: if arc_length > 1e-12 { road_turn / arc_length } else { 0.0 },
            dt,
        }
    }

    /// The step with a heading drift of `drift` over the interval removed;
    /// the chord follows half of it.
    fn without_drift(&self, drift: f64) -> Self {
        Self::new(self.chord, self.heading_change - drift, self.chord_angle - drift / 2.0, self.dt)
    }
}

/// Length of a circular arc with the given chord and turn angle.
fn arc_from_chord(chord: f64, turn: f64) -> f64 {
    let half = turn / 2.0;
    if half.abs() < 1e-9 {
        chord
    } else {
        chord * half / half.sin()
    }
}

/// Endpoint of an arc of curvature `k` and length `len` starting at the
/// origin heading along +x.
fn arc_end(k: f64, len: f64) -> (f64, f64) {
    let turn = k * len;
    if turn.abs() < 1e-9 {
        (len, k * len * len / 2.0)
    } else {
        (turn.sin() / k, (1.0 - turn.cos()) / k)
    }
}

/// Chord direction and chord length of a path made of `frac * len` at
/// curvature `ka` followed by the rest at `kb`.
fn two_piece_chord(ka: f64, kb: f64, len: f64, frac: f64) -> (f64, f64) {
    let (u, v) = (frac * len, (1.0 - frac) * len);
    let (x1, y1) = arc_end(ka, u);
    let h = ka * u;
    let (x2, y2) = arc_end(kb, v);
    let x = x1 + h.cos() * x2 - h.sin() * y2;
    let y = y1 + h.sin() * x2 + h.cos() * y2;
    (y.atan2(x), x.hypot(y))
}

/// Heading discontinuity not explained by the road, per interval.
///
/// Away from curvature changes the chord of a circular arc bisects the turn,
/// so a heading step at the start of an interval shows up as chord
/// asymmetry. An interval whose implied curvature disagrees with two
/// agreeing neighbours (a step part way through a longer interval) takes the
/// neighbours' curvature instead. Where the curvature changes inside an
/// interval, the interval is modelled as two arcs with the neighbouring
/// curvatures and the split point is solved from the observed heading change
/// and chord direction.
fn heading_jumps(steps: &[IntervalStep]) -> Vec<f64> {
    let n = steps.len() as isize;
    let curv = |i: isize| (0..n).contains(&i).then(|| steps[i as usize].curvature);

    (0..n)
        .map(|k| {
            let s = &steps[k as usize];
            let circular = 2.0 * s.chord_angle - s.heading_change;
            let (prev, next) = (curv(k - 1), curv(k + 1));
            if [prev, next].into_iter().flatten().any(|c| (c - s.curvature).abs() <= CURVATURE_MATCH) {
                return circular;
            }
            // nearest pair of surrounding intervals that agree on the road curvature
            // an unmatched interval at either end cannot be separated from the road
            let (Some(ka), Some(kb)) = (prev, next) else {
                return if prev.is_none() && next.is_none() { circular } else { 0.0 };
            };
            for (i, j) in [(k - 1, k + 1), (k - 2, k + 2), (k - 1, k + 2), (k - 2, k + 1)] {
                if let (Some(a), Some(b)) = (curv(i), curv(j)) {
                    if (a - b).abs() <= CURVATURE_PAIR_MATCH {
                        let road = 0.5 * (a + b);
                        let len = arc_from_chord(s.chord, road * s.chord);
                        return s.heading_change - road * len;
                    }
                }
            }
            // prefer neighbours whose curvature is confirmed by their own neighbour
            let settled = |i: isize| {
                let c = curv(i)?;
                [curv(i - 1), curv(i + 1)]
                    .into_iter()
                    .flatten()
                    .any(|o| (o - c).abs() <= CURVATURE_MATCH)
                    .then_some(c)
            };
            let ka = (1..=3).find_map(|o| settled(k - o)).unwrap_or(ka);
            let kb = (1..=3).find_map(|o| settled(k + o)).unwrap_or(kb);
            let road = 0.5 * (ka + kb);
            let (lo, hi) = (ka.min(kb) - CURVATURE_PAIR_MATCH, ka.max(kb) + CURVATURE_PAIR_MATCH);
            if !(lo..=hi).contains(&s.curvature) {
                // no blend of the neighbouring arcs explains it
                let len = arc_from_chord(s.chord, road * s.chord);
                return s.heading_change - road * len;
            }
            two_piece_jump(s, ka, kb).unwrap_or(circular)
        })
        .collect()
}

fn two_piece_jump(s: &IntervalStep, ka: f64, kb: f64) -> Option<f64> {
    // road turn minus chord angle, which a jump at the interval start leaves unchanged
    let target = s.heading_change - s.chord_angle;
    let eval = |frac: f64| {
        let mut len = s.chord;
        let mut angle = 0.0;
        for _ in 0..4 {
            let (a, c) = two_piece_chord(ka, kb, len, frac);
            angle = a;
            if c > 1e-12 {
                len *= s.chord / c;
            }
        }
        (ka * frac * len + kb * (1.0 - frac) * len - angle, angle)
    };
    let (f0, _) = eval(0.0);
    let (f1, _) = eval(1.0);
    if (f1 - f0).abs() < 1e-12 {
        return None;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let increasing = f1 > f0;
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        let (f, _) = eval(mid);
        if (f < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (_, angle) = eval(0.5 * (lo + hi));
    Some(s.chord_angle - angle)
}
