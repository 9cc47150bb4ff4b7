use std::f64::consts::PI;

use proptest::prelude::*;

use dms_core::dms::{lane_offset_lateral, lane_offset_ph};
use dms_core::geometry::{build_octagon_track, build_ring_track, TrackPosition, TrackSpec};
use dms_core::path_history::{PathHistoryBuffer, PathHistoryPoint};
use dms_core::traffic::{KraussParams, VehicleState, World};
use dms_core::types::{Direction, TurnSignal, VehicleId};
use dms_core::v2x::{bsm_from_state, decode_bsm, decode_dim, encode_bsm, encode_dim, AppType, Bsm, Dim};

fn octagon() -> TrackSpec {
    build_octagon_track(80.0, 40.0, 3, 3.5).unwrap()
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE), Just(f64::MAX)]
}

fn signal() -> impl Strategy<Value = TurnSignal> {
    prop_oneof![Just(TurnSignal::Off), Just(TurnSignal::Left), Just(TurnSignal::Right)]
}

fn app_type() -> impl Strategy<Value = AppType> {
    prop_oneof![
        Just(AppType::LaneChange),
        Just(AppType::StopSignRow),
        Just(AppType::SlowTraffic),
        Just(AppType::Tailgating),
        Just(AppType::LateGreen),
    ]
}

/// A host path with one lane change, sampled every 0.1 s.
fn maneuver_path(s: f64, speed: f64, direction: Direction) -> PathHistoryBuffer {
    let track = octagon();
    let v = VehicleState::new(VehicleId(0), TrackPosition::new(s, 1, 0.0), speed, 3.5, speed);
    let mut w = World::from_vehicles(&track, vec![v], VehicleId(0), 0.1, KraussParams::default(), 0);
    let mut ph = PathHistoryBuffer::new(300.0, 1.0);
    for _ in 0..80 {
        if w.tick == 5 {
            w.signal_intent(&track, direction, 3.0);
            w.start_pending_maneuver(&track);
        }
        let b = bsm_from_state(&track, w.host(), w.time_ms());
        ph.append_sample(PathHistoryPoint {
            x: b.x,
            y: b.y,
            heading: b.heading,
            speed: b.speed,
            yaw_rate: b.yaw_rate,
            timestamp_ms: b.timestamp_ms,
        })
        .unwrap();
        w.step(&track).unwrap();
    }
    ph
}

fn transformed(ph: &PathHistoryBuffer, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) -> PathHistoryBuffer {
    let mut out = PathHistoryBuffer::new(ph.max_path_length(), 1.0);
    for p in ph.points() {
        let (x, y, heading) = f(p.x, p.y, p.heading);
        out.append_sample(PathHistoryPoint { x, y, heading, ..*p }).unwrap();
    }
    out
}

proptest! {
    #[test]
    fn projection_round_trips(s in 0.0..1_000.0f64, lane in 0usize..3, offset in -1.7..1.7f64) {
        let track = octagon();
        let s = s % track.total_length;
        let pos = TrackPosition::new(s, lane, offset);
        let back = track.project_to_track(&track.to_world(&pos).unwrap()).unwrap();
        let ds = (back.s - s).abs();
        prop_assert!(ds.min(track.total_length - ds) < 1e-6);
        prop_assert_eq!(back.lane, lane);
        prop_assert!((back.lateral_offset - offset).abs() < 1e-6);
    }

    #[test]
    fn ring_closes_for_any_radius(radius in 12.0..500.0f64) {
        let track = build_ring_track(radius, 3, 3.5).unwrap();
        for lane in 0..3 {
            let a = track.to_world(&TrackPosition::new(0.0, lane, 0.0)).unwrap();
            let b = track.pose_at(track.total_length - 1e-9, track.lane_center(lane));
            prop_assert!(a.distance_to(&b) < 1e-6);
        }
    }

    #[test]
    fn bsm_codec_is_identity(
        sender in any::<u32>(),
        timestamp_ms in any::<u64>(),
        x in finite(), y in finite(), heading in -PI..PI,
        speed in 0.0..80.0f64, yaw_rate in finite(), accel in finite(),
        turn_signal in signal(),
    ) {
        let b = Bsm { sender_id: VehicleId(sender), timestamp_ms, x, y, heading, speed, yaw_rate, accel, turn_signal };
        let back = decode_bsm(&encode_bsm(&b).unwrap()).unwrap();
        prop_assert_eq!(back, b);
        prop_assert_eq!(back.x.to_bits(), b.x.to_bits());
    }

    #[test]
    fn dim_codec_is_identity(
        sender in any::<u32>(), target in any::<u32>(), app in app_type(),
        left in any::<bool>(), timestamp_ms in any::<u64>(),
    ) {
        prop_assume!(sender != target);
        let d = Dim {
            sender_id: VehicleId(sender),
            target_id: VehicleId(target),
            app_type: app,
            direction: if left { Direction::Left } else { Direction::Right },
            timestamp_ms,
        };
        prop_assert_eq!(decode_dim(&encode_dim(&d).unwrap()).unwrap(), d);
    }

    #[test]
    fn truncated_bsm_is_rejected(len in 0usize..61) {
        let b = Bsm {
            sender_id: VehicleId(1), timestamp_ms: 0, x: 0.0, y: 0.0, heading: 0.0,
            speed: 0.0, yaw_rate: 0.0, accel: 0.0, turn_signal: TurnSignal::Off,
        };
        prop_assert!(decode_bsm(&encode_bsm(&b).unwrap()[..len]).is_err());
    }

    #[test]
    fn closest_point_matches_brute_force(
        pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 1..40),
        qx in -60.0..60.0f64, qy in -60.0..60.0f64,
    ) {
        let mut ph = PathHistoryBuffer::new(1e9, 0.0);
        for (i, &(x, y)) in pts.iter().enumerate() {
            ph.append_sample(PathHistoryPoint { x, y, heading: 0.0, speed: 1.0, yaw_rate: 0.0, timestamp_ms: i as u64 }).unwrap();
        }
        let idx = ph.closest_point(qx, qy).unwrap();
        let best = ph.points().iter().map(|p| p.distance_to(qx, qy)).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(ph.points()[idx].distance_to(qx, qy), best);
        // ties resolve to the newest point
        prop_assert!(ph.points().iter().skip(idx + 1).all(|p| p.distance_to(qx, qy) > best));
    }

    #[test]
    fn lateral_offset_is_invariant_under_rigid_motion(
        hx in -100.0..100.0f64, hy in -100.0..100.0f64, heading in -PI..PI,
        tx in -100.0..100.0f64, ty in -100.0..100.0f64,
        rot in -PI..PI, dx in -1e3..1e3f64, dy in -1e3..1e3f64,
    ) {
        let hv = Bsm {
            sender_id: VehicleId(0), timestamp_ms: 0, x: hx, y: hy, heading,
            speed: 10.0, yaw_rate: 0.0, accel: 0.0, turn_signal: TurnSignal::Left,
        };
        let (c, s) = (rot.cos(), rot.sin());
        let moved = Bsm { x: c * hx - s * hy + dx, y: s * hx + c * hy + dy, heading: heading + rot, ..hv };
        let a = lane_offset_lateral(&hv, tx, ty, 3.5);
        let b = lane_offset_lateral(&moved, c * tx - s * ty + dx, s * tx + c * ty + dy, 3.5);
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a.raw - b.raw).abs() < 1e-6);
            prop_assert_eq!(a.lanes, b.lanes);
        }
        let mirrored = Bsm { y: -hy, heading: -heading, ..hv };
        let m = lane_offset_lateral(&mirrored, tx, -ty, 3.5);
        if let (Ok(a), Ok(m)) = (a, m) {
            prop_assert!((a.raw + m.raw).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn path_history_is_invariant_under_rigid_motion(
        s in 0.0..960.0f64, speed in 8.0..33.0f64, left in any::<bool>(),
        rot in -PI..PI, dx in -1e3..1e3f64, dy in -1e3..1e3f64,
        back in 0.25..0.75f64, lane_off in -1i32..=1,
    ) {
        let dir = if left { Direction::Left } else { Direction::Right };
        let ph = maneuver_path(s, speed, dir);
        let (c, sn) = (rot.cos(), rot.sin());
        let moved = transformed(&ph, |x, y, h| (c * x - sn * y + dx, sn * x + c * y + dy, h + rot));
        let mirrored = transformed(&ph, |x, y, h| (x, -y, -h));

        let expected = if left { 1 } else { -1 };
        prop_assert_eq!(ph.lane_shift_since(0, 3.5), expected);
        prop_assert_eq!(moved.lane_shift_since(0, 3.5), expected);
        prop_assert_eq!(mirrored.lane_shift_since(0, 3.5), -expected);

        // a target one lane to the side of an early path point
        let p = ph.points()[(ph.len() as f64 * back) as usize];
        let side = 3.5 * lane_off as f64;
        let (tx, ty) = (p.x - p.heading.sin() * side, p.y + p.heading.cos() * side);
        let a = lane_offset_ph(&ph, tx, ty, 3.5);
        let b = lane_offset_ph(&moved, c * tx - sn * ty + dx, sn * tx + c * ty + dy, 3.5);
        let m = lane_offset_ph(&mirrored, tx, -ty, 3.5);
        prop_assert_eq!(a.map(|o| o.lanes), b.map(|o| o.lanes));
        prop_assert_eq!(a.map(|o| -o.lanes), m.map(|o| o.lanes));
    }
}
