//! Closed ring road geometry.
//!
//! A track is a loop of straight and constant-curvature segments described
//! along the centerline of lane 0. Lane `k` runs parallel to it, offset
//! `k * lane_width` to the right of the driving direction, which is outward
//! for the counterclockwise rings built here.

use std::f64::consts::{FRAC_PI_4, TAU};

use thiserror::Error;

/// Position residual allowed when checking that a segment chain closes.
pub const CLOSURE_TOL_M: f64 = 1e-6;
/// Heading residual allowed when checking that a segment chain closes.
pub const CLOSURE_TOL_RAD: f64 = 1e-9;
/// Extra margin beyond the lane band inside which a pose still counts as on the road.
pub const OFFROAD_MARGIN_M: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid track dimension: {0}")]
    InvalidDimension(String),
    #[error("arc radius {radius} m leaves no room for {lane_count} lanes of {lane_width} m")]
    ArcTooTight {
        radius: f64,
        lane_count: usize,
        lane_width: f64,
    },
    #[error("segment chain does not close: residual {distance:.3e} m, {heading:.3e} rad")]
    NotClosed { distance: f64, heading: f64 },
    #[error("lane {lane} out of range (track has {lane_count} lanes)")]
    LaneOutOfRange { lane: usize, lane_count: usize },
    #[error("pose ({x:.3}, {y:.3}) is {distance:.3} m from the nearest lane centerline")]
    OffRoad { x: f64, y: f64, distance: f64 },
}

/// Normalizes an angle to `[0, 2π)`.
pub fn normalize_heading(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Wraps an angle difference to `[-π, π)`.
pub fn wrap_angle(angle: f64) -> f64 {
    let a = (angle + std::f64::consts::PI).rem_euclid(TAU);
    a - std::f64::consts::PI
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPose {
    pub x: f64,
    pub y: f64,
    /// Radians in `[0, 2π)`, counterclockwise from +x.
    pub heading: f64,
}

impl WorldPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_heading(heading),
        }
    }

    pub fn distance_to(&self, other: &WorldPose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPosition {
    /// Arc length along lane 0 in `[0, total_length)`.
    pub s: f64,
    pub lane: usize,
    /// Signed deviation from the lane centerline, positive toward higher lane index.
    pub lateral_offset: f64,
}

impl TrackPosition {
    pub fn new(s: f64, lane: usize, lateral_offset: f64) -> Self {
        Self {
            s,
            lane,
            lateral_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Straight,
    Arc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub kind: SegmentKind,
    /// Length along the lane-0 centerline.
    pub length: f64,
    /// Signed curvature, positive for a left turn; zero for straights.
    pub curvature: f64,
    pub start_pose: WorldPose,
    /// Arc length at which the segment starts.
    pub start_s: f64,
}

impl SegmentSpec {
    fn right_normal(heading: f64) -> (f64, f64) {
        (heading.sin(), -heading.cos())
    }

    /// Pose at local arc length `u` and lateral distance `d` right of lane 0.
    fn pose_at(&self, u: f64, d: f64) -> WorldPose {
        let h0 = self.start_pose.heading;
        match self.kind {
            SegmentKind::Straight => {
                let (rx, ry) = Self::right_normal(h0);
                WorldPose::new(
                    self.start_pose.x + u * h0.cos() + d * rx,
                    self.start_pose.y + u * h0.sin() + d * ry,
                    h0,
                )
            }
            SegmentKind::Arc => {
                let (cx, cy) = self.center();
                let phi = h0 + self.curvature * u;
                let (rx, ry) = Self::right_normal(phi);
                let r = 1.0 / self.curvature + d;
                WorldPose::new(cx + r * rx, cy + r * ry, phi)
            }
        }
    }

    fn center(&self) -> (f64, f64) {
        let h0 = self.start_pose.heading;
        let k = 1.0 / self.curvature;
        (self.start_pose.x - k * h0.sin(), self.start_pose.y + k * h0.cos())
    }

    /// Unclamped local arc length and lateral distance (right of lane 0) of a point.
    fn local_coords(&self, x: f64, y: f64) -> (f64, f64) {
        let h0 = self.start_pose.heading;
        match self.kind {
            SegmentKind::Straight => {
                let dx = x - self.start_pose.x;
                let dy = y - self.start_pose.y;
                let (rx, ry) = Self::right_normal(h0);
                (dx * h0.cos() + dy * h0.sin(), dx * rx + dy * ry)
            }
            SegmentKind::Arc => {
                let (cx, cy) = self.center();
                let vx = x - cx;
                let vy = y - cy;
                let dist = vx.hypot(vy);
                let (phi, r_signed) = if self.curvature > 0.0 {
                    (vx.atan2(-vy), dist)
                } else {
                    ((-vx).atan2(vy), -dist)
                };
                let sweep = wrap_angle(phi - h0);
                let u = sweep / self.curvature;
                (u, r_signed - 1.0 / self.curvature)
            }
        }
    }

    pub fn end_pose(&self) -> WorldPose {
        self.pose_at(self.length, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSpec {
    pub segments: Vec<SegmentSpec>,
    pub lane_count: usize,
    pub lane_width: f64,
    pub total_length: f64,
}

/// Octagonal ring: eight straights joined by eight 45° left arcs.
pub fn build_octagon_track(
    straight_len: f64,
    arc_radius: f64,
    lane_count: usize,
    lane_width: f64,
) -> Result<TrackSpec, GeometryError> {
    if !(straight_len > 0.0) {
        return Err(GeometryError::InvalidDimension(format!(
            "straight length must be positive, got {straight_len}"
        )));
    }
    let mut pieces = Vec::with_capacity(16);
    for _ in 0..8 {
        pieces.push((SegmentKind::Straight, straight_len, 0.0));
        pieces.push((SegmentKind::Arc, arc_radius * FRAC_PI_4, 1.0 / arc_radius));
    }
    check_arc_radius(arc_radius, lane_count, lane_width)?;
    TrackSpec::from_pieces(&pieces, lane_count, lane_width)
}

/// Circular ring made of eight 45° left arcs.
pub fn build_ring_track(
    radius: f64,
    lane_count: usize,
    lane_width: f64,
) -> Result<TrackSpec, GeometryError> {
    check_arc_radius(radius, lane_count, lane_width)?;
    let pieces = vec![(SegmentKind::Arc, radius * FRAC_PI_4, 1.0 / radius); 8];
    TrackSpec::from_pieces(&pieces, lane_count, lane_width)
}

fn check_arc_radius(radius: f64, lane_count: usize, lane_width: f64) -> Result<(), GeometryError> {
    if lane_count == 0 {
        return Err(GeometryError::InvalidDimension(
            "lane count must be at least 1".into(),
        ));
    }
    if !(lane_width > 0.0) {
        return Err(GeometryError::InvalidDimension(format!(
            "lane width must be positive, got {lane_width}"
        )));
    }
    if !(radius > 0.0) {
        return Err(GeometryError::InvalidDimension(format!(
            "arc radius must be positive, got {radius}"
        )));
    }
    if radius <= lane_count as f64 * lane_width {
        return Err(GeometryError::ArcTooTight {
            radius,
            lane_count,
            lane_width,
        });
    }
    Ok(())
}

impl TrackSpec {
    /// Chains `(kind, length, curvature)` pieces from the origin heading east
    /// and checks that the chain closes.
    pub fn from_pieces(
        pieces: &[(SegmentKind, f64, f64)],
        lane_count: usize,
        lane_width: f64,
    ) -> Result<Self, GeometryError> {
        if pieces.is_empty() {
            return Err(GeometryError::InvalidDimension("no segments".into()));
        }
        if lane_count == 0 || !(lane_width > 0.0) {
            return Err(GeometryError::InvalidDimension(
                "lane count must be >= 1 and lane width positive".into(),
            ));
        }
        let mut segments = Vec::with_capacity(pieces.len());
        let mut pose = WorldPose::new(0.0, 0.0, 0.0);
        let mut start_s = 0.0;
        for &(kind, length, curvature) in pieces {
            if !(length > 0.0) {
                return Err(GeometryError::InvalidDimension(format!(
                    "segment length must be positive, got {length}"
                )));
            }
            if (kind == SegmentKind::Straight) != (curvature == 0.0) {
                return Err(GeometryError::InvalidDimension(
                    "straight segments must have zero curvature and arcs nonzero".into(),
                ));
            }
            let seg = SegmentSpec {
                kind,
                length,
                curvature,
                start_pose: pose,
                start_s,
            };
            pose = seg.end_pose();
            start_s += length;
            segments.push(seg);
        }
        let first = segments[0].start_pose;
        let distance = pose.distance_to(&first);
        let heading = wrap_angle(pose.heading - first.heading).abs();
        if distance > CLOSURE_TOL_M || heading > CLOSURE_TOL_RAD {
            return Err(GeometryError::NotClosed { distance, heading });
        }
        Ok(Self {
            segments,
            lane_count,
            lane_width,
            total_length: start_s,
        })
    }

    /// Wraps an arc length into `[0, total_length)`.
    pub fn wrap_s(&self, s: f64) -> f64 {
        let w = s.rem_euclid(self.total_length);
        if w >= self.total_length {
            0.0
        } else {
            w
        }
    }

    pub fn segment_index_at(&self, s: f64) -> usize {
        let s = self.wrap_s(s);
        match self
            .segments
            .binary_search_by(|seg| seg.start_s.partial_cmp(&s).expect("finite arc length"))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    pub fn segment_at(&self, s: f64) -> &SegmentSpec {
        &self.segments[self.segment_index_at(s)]
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.segment_at(s).curvature
    }

    /// Ratio of path length at lateral distance `d` (right of lane 0) to lane-0 arc length.
    pub fn path_scale(&self, s: f64, d: f64) -> f64 {
        1.0 + self.curvature_at(s) * d
    }

    /// Lane-0 arc length covered when travelling `ground` metres from `s` at
    /// fixed lateral distance `d`, accounting for segment boundaries.
    pub fn arc_advance(&self, s: f64, d: f64, ground: f64) -> f64 {
        let mut idx = self.segment_index_at(s);
        let mut pos = self.wrap_s(s) - self.segments[idx].start_s;
        let mut left = ground.max(0.0);
        let mut ds = 0.0;
        loop {
            let seg = &self.segments[idx];
            let scale = (1.0 + seg.curvature * d).max(f64::EPSILON);
            let room = (seg.length - pos).max(0.0);
            if left <= room * scale {
                return ds + left / scale;
            }
            left -= room * scale;
            ds += room;
            pos = 0.0;
            idx = (idx + 1) % self.segments.len();
        }
    }

    /// Ground distance at lateral distance `d` for a lane-0 advance of `ds` from `s`.
    pub fn ground_length(&self, s: f64, d: f64, ds: f64) -> f64 {
        let mut idx = self.segment_index_at(s);
        let mut pos = self.wrap_s(s) - self.segments[idx].start_s;
        let mut left = ds.max(0.0);
        let mut ground = 0.0;
        loop {
            let seg = &self.segments[idx];
            let scale = 1.0 + seg.curvature * d;
            let room = (seg.length - pos).max(0.0);
            if left <= room {
                return ground + left * scale;
            }
            left -= room;
            ground += room * scale;
            pos = 0.0;
            idx = (idx + 1) % self.segments.len();
        }
    }

    /// Lateral distance of a lane centerline from lane 0.
    pub fn lane_center(&self, lane: usize) -> f64 {
        lane as f64 * self.lane_width
    }

    pub fn to_world(&self, pos: &TrackPosition) -> Result<WorldPose, GeometryError> {
        if pos.lane >= self.lane_count {
            return Err(GeometryError::LaneOutOfRange {
                lane: pos.lane,
                lane_count: self.lane_count,
            });
        }
        Ok(self.pose_at(pos.s, self.lane_center(pos.lane) + pos.lateral_offset))
    }

    /// Pose at arc length `s` and lateral distance `d` right of lane 0.
    pub fn pose_at(&self, s: f64, d: f64) -> WorldPose {
        let s = self.wrap_s(s);
        let seg = self.segment_at(s);
        seg.pose_at(s - seg.start_s, d)
    }

    /// Nearest track position to a world pose. Exact lane midlines resolve to
    /// the lower lane index.
    pub fn project_to_track(&self, pose: &WorldPose) -> Result<TrackPosition, GeometryError> {
        let band_max = self.lane_center(self.lane_count - 1);
        let mut best: Option<(f64, f64, f64)> = None; // (distance, s, d)
        for seg in &self.segments {
            let (u, d) = seg.local_coords(pose.x, pose.y);
            let u_c = u.clamp(0.0, seg.length);
            let d_c = d.clamp(0.0, band_max);
            let p = seg.pose_at(u_c, d_c);
            let dist = (p.x - pose.x).hypot(p.y - pose.y);
            if best.is_none_or(|(bd, _, _)| dist < bd) {
                best = Some((dist, seg.start_s + u_c, d));
            }
        }
        let (dist, s, d) = best.expect("track has segments");
        if dist > self.lane_count as f64 * self.lane_width + OFFROAD_MARGIN_M {
            return Err(GeometryError::OffRoad {
                x: pose.x,
                y: pose.y,
                distance: dist,
            });
        }
        let lane = ((d / self.lane_width - 0.5).ceil().max(0.0) as usize).min(self.lane_count - 1);
        Ok(TrackPosition {
            s: self.wrap_s(s),
            lane,
            lateral_offset: d - self.lane_center(lane),
        })
    }

    /// Forward arc length from `s_follow` to `s_lead` along the driving direction.
    pub fn longitudinal_gap(&self, s_lead: f64, s_follow: f64) -> f64 {
        self.wrap_s(s_lead - s_follow)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn octagon() -> TrackSpec {
        build_octagon_track(80.0, 40.0, 3, 3.5).unwrap()
    }

    #[test]
    fn octagon_length_matches_closed_form() {
        let track = octagon();
        assert_eq!(track.segments.len(), 16);
        let expected = 8.0 * (80.0 + 40.0 * PI / 4.0);
        assert!((track.total_length - expected).abs() < 1e-9);
        assert!((track.total_length - 891.327).abs() < 1e-3);
    }

    #[test]
    fn octagon_length_matches_numerical_integration() {
        // sum of chord lengths over a fine sampling of the centerline
        let track = octagon();
        let n = 200_000;
        let mut prev = track.pose_at(0.0, 0.0);
        let mut total = 0.0;
        for i in 1..=n {
            let s = track.total_length * i as f64 / n as f64;
            let p = track.pose_at(s.min(track.total_length - 1e-12), 0.0);
            total += p.distance_to(&prev);
            prev = p;
        }
        assert!((total - track.total_length).abs() < 1e-3, "{total}");
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(
            build_octagon_track(80.0, 10.0, 3, 3.5),
            Err(GeometryError::ArcTooTight { .. })
        ));
        assert!(build_octagon_track(0.0, 40.0, 3, 3.5).is_err());
        assert!(build_octagon_track(80.0, 40.0, 0, 3.5).is_err());
        assert!(build_octagon_track(80.0, 40.0, 3, -1.0).is_err());
    }

    #[test]
    fn arcs_sweep_quarter_pi() {
        for seg in octagon().segments {
            match seg.kind {
                SegmentKind::Arc => assert!((seg.curvature * seg.length - FRAC_PI_4).abs() < 1e-12),
                SegmentKind::Straight => assert_eq!(seg.curvature, 0.0),
            }
        }
    }

    #[test]
    fn world_pose_examples() {
        let track = octagon();
        let p = track.to_world(&TrackPosition::new(0.0, 0, 0.0)).unwrap();
        assert_eq!(p, track.segments[0].start_pose);
        let p = track.to_world(&TrackPosition::new(40.0, 0, 0.0)).unwrap();
        assert!((p.x - 40.0).abs() < 1e-12 && p.y.abs() < 1e-12 && p.heading == 0.0);

        let arc = track.segments[1];
        let mid = arc.start_s + arc.length / 2.0;
        let p = track.to_world(&TrackPosition::new(mid, 0, 0.0)).unwrap();
        assert!((p.heading - PI / 8.0).abs() < 1e-12);
        // finite-difference tangent agrees with the reported heading
        let h = 1e-5;
        let a = track.pose_at(mid - h, 0.0);
        let b = track.pose_at(mid + h, 0.0);
        let fd = (b.y - a.y).atan2(b.x - a.x);
        assert!((fd - PI / 8.0).abs() < 1e-8);
    }

    #[test]
    fn higher_lanes_sit_outward() {
        let track = octagon();
        // on the first straight heading east, outward (right) is -y
        let p = track.to_world(&TrackPosition::new(10.0, 2, 0.0)).unwrap();
        assert!((p.y + 7.0).abs() < 1e-12);
        assert!(matches!(
            track.to_world(&TrackPosition::new(10.0, 3, 0.0)),
            Err(GeometryError::LaneOutOfRange { .. })
        ));
    }

    #[test]
    fn projection_tie_goes_to_lower_lane() {
        let track = octagon();
        let pose = WorldPose::new(30.0, -1.75, 0.0);
        let pos = track.project_to_track(&pose).unwrap();
        assert_eq!(pos.lane, 0);
        assert!((pos.lateral_offset - 1.75).abs() < 1e-12);
    }

    #[test]
    fn far_pose_is_off_road() {
        let track = octagon();
        let pose = WorldPose::new(30.0, -50.0, 0.0);
        assert!(matches!(
            track.project_to_track(&pose),
            Err(GeometryError::OffRoad { .. })
        ));
    }

    #[test]
    fn closure_walk_returns_to_start() {
        let track = octagon();
        let last = track.segments.last().unwrap().end_pose();
        let first = track.segments[0].start_pose;
        assert!(last.distance_to(&first) < CLOSURE_TOL_M);
        assert!(wrap_angle(last.heading - first.heading).abs() < CLOSURE_TOL_RAD);
    }

    #[test]
    fn gap_examples() {
        let track = octagon();
        assert!((track.longitudinal_gap(50.0, 20.0) - 30.0).abs() < 1e-12);
        let g = track.longitudinal_gap(10.0, 880.0);
        // step the follower forward in 1 mm increments until it reaches the leader
        let mut s = 880.0;
        let mut walked = 0.0;
        while track.longitudinal_gap(10.0, track.wrap_s(s)) > 1e-3 {
            s += 1e-3;
            walked += 1e-3;
        }
        assert!((g - walked).abs() < 2e-3);
        assert!((g - (10.0 + track.total_length - 880.0)).abs() < 1e-9);
        assert_eq!(track.longitudinal_gap(123.0, 123.0), 0.0);
    }

    #[test]
    fn ring_track_closes() {
        let ring = build_ring_track(400.0, 2, 3.5).unwrap();
        assert!((ring.total_length - 2.0 * PI * 400.0).abs() < 1e-9);
    }
}
