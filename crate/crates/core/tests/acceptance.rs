//! End-to-end acceptance checks. Runs as a plain binary so every check prints
//! its verdict line whether it passes or not.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use dms_core::dms::{find_trailing, recognize_tv, GapMeasure, LaneOffset, RecognitionMethod, SkipReason};
use dms_core::geometry::{build_octagon_track, build_ring_track, TrackPosition, TrackSpec};
use dms_core::harness::output::run_matrix;
use dms_core::harness::replay::{generate_benchmark, run_replay, BenchmarkParams, ReplayScenario};
use dms_core::harness::ExperimentConfig;
use dms_core::metrics::{classify, ExperimentResult, Outcome};
use dms_core::path_history::{PathHistoryBuffer, PathHistoryPoint};
use dms_core::traffic::{IntentScheduler, KraussParams, Mode, SimConfig, VehicleState, World};
use dms_core::types::{Direction, TurnSignal, VehicleId};
use dms_core::v2x::{
    bsm_from_state, decode_bsm, decode_dim, encode_bsm, encode_dim, AppType, Bsm, Dim, LocalObjectMap,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Results of the default matrix keyed by (mode, threshold in whole metres).
type Matrix = BTreeMap<(Mode, u32), ExperimentResult>;

fn parse_matrix(summary: &Value) -> Matrix {
    summary["runs"]
        .as_array()
        .expect("runs array")
        .iter()
        .map(|r| {
            let mode: Mode = serde_json::from_value(r["mode"].clone()).unwrap();
            let thresh = r["thresh"].as_f64().unwrap() as u32;
            let result: ExperimentResult = serde_json::from_value(r["result"].clone()).unwrap();
            ((mode, thresh), result)
        })
        .collect()
}

const THRESHOLDS: [u32; 4] = [50, 75, 100, 150];

fn ph_beats_lateral(m: &Matrix) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for t in THRESHOLDS {
        let ph = m[&(Mode::DmsPh, t)].percentages;
        let lat = m[&(Mode::DmsLateral, t)].percentages;
        let ok = ph.tp + ph.tn >= lat.tp + lat.tn && ph.fp + ph.fn_ <= lat.fp + lat.fn_;
        pass &= ok;
        parts.push(format!(
            "{t}m correct {:.1}/{:.1} wrong {:.1}/{:.1}",
            ph.tp + ph.tn,
            lat.tp + lat.tn,
            ph.fp + ph.fn_,
            lat.fp + lat.fn_
        ));
    }
    verdict(pass, parts.join("; "))
}

fn threshold_trend(m: &Matrix) -> Verdict {
    let lo = m[&(Mode::DmsPh, 50)].percentages;
    let hi = m[&(Mode::DmsPh, 150)].percentages;
    verdict(
        hi.tp > lo.tp && hi.tn < lo.tn,
        format!("TP {:.2} -> {:.2}, TN {:.2} -> {:.2}", lo.tp, hi.tp, lo.tn, hi.tn),
    )
}

fn headway_gain(m: &Matrix) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for t in THRESHOLDS {
        let ph = &m[&(Mode::DmsPh, t)];
        let base = &m[&(Mode::NoDms, t)];
        let (Some(ps), Some(pt), Some(bs), Some(bt)) = (
            ph.mean_space_headway,
            ph.mean_time_headway,
            base.mean_space_headway,
            base.mean_time_headway,
        ) else {
            pass = false;
            parts.push(format!("{t}m: no headway samples"));
            continue;
        };
        let means_ok = ps > bs && pt > bt;
        let base_bins: HashMap<i64, f64> = base
            .headway_bins
            .iter()
            .map(|b| (b.from as i64, b.mean_space_headway))
            .collect();
        let ph_bins: HashMap<i64, f64> = ph
            .headway_bins
            .iter()
            .map(|b| (b.from as i64, b.mean_space_headway))
            .collect();
        let mut negative = Vec::new();
        let mut empty = Vec::new();
        for from in (0..100).step_by(10) {
            match (ph_bins.get(&from), base_bins.get(&from)) {
                (Some(a), Some(b)) if a <= b => negative.push(format!("{from}({:+.1})", a - b)),
                (Some(_), Some(_)) => {}
                _ => empty.push(from.to_string()),
            }
        }
        pass &= means_ok && negative.is_empty();
        let mut line = format!("{t}m space {ps:.1}/{bs:.1} time {pt:.2}/{bt:.2}");
        if !negative.is_empty() {
            line.push_str(&format!(" non-positive bins {}", negative.join(",")));
        }
        if !empty.is_empty() {
            line.push_str(&format!(" empty bins {}", empty.join(",")));
        }
        parts.push(line);
    }
    verdict(pass, parts.join("; "))
}

fn benchmark_replay() -> Verdict {
    let trace = generate_benchmark(&BenchmarkParams::default()).expect("benchmark");
    let scenario = ReplayScenario::default();
    let ph = run_replay(&trace.bsms, &scenario, RecognitionMethod::PathHistory, Some(&trace.annotations)).unwrap();
    let lat = run_replay(&trace.bsms, &scenario, RecognitionMethod::LateralOnly, Some(&trace.annotations)).unwrap();
    let ph_tp = ph.iter().filter(|e| e.outcome == Some(Outcome::TruePositive)).count();
    let far: Vec<_> = lat
        .iter()
        .filter(|e| e.expected.and_then(|a| a.gap).is_some_and(|g| g > 150.0))
        .collect();
    let far_tp = far.iter().filter(|e| e.outcome == Some(Outcome::TruePositive)).count();
    verdict(
        ph.len() >= 20 && ph_tp == ph.len() && !far.is_empty() && far_tp < far.len(),
        format!(
            "path history {ph_tp}/{} TP; lateral {far_tp}/{} TP beyond 150 m",
            ph.len(),
            far.len()
        ),
    )
}

fn random_offset(rng: &mut ChaCha8Rng) -> Result<LaneOffset, SkipReason> {
    match rng.random_range(0..10) {
        0 => Err(SkipReason::NoCoverage),
        1 => Err(SkipReason::Ambiguous),
        _ => {
            let lanes = rng.random_range(-2..=2);
            Ok(LaneOffset {
                raw: lanes as f64 * 3.5 + rng.random_range(-1.0..1.0),
                lanes,
            })
        }
    }
}

fn oracle_equivalence() -> Verdict {
    // a long straight first segment keeps gaps exact along x
    let track = build_octagon_track(2000.0, 40.0, 3, 3.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cases = 1000;
    let mut agree = 0;
    for _ in 0..cases {
        let hv_s = 1200.0;
        let hv_pose = track.pose_at(hv_s, track.lane_center(1));
        let hv = Bsm {
            sender_id: VehicleId(0),
            timestamp_ms: 0,
            x: hv_pose.x,
            y: hv_pose.y,
            heading: 0.0,
            speed: 20.0,
            yaw_rate: 0.0,
            accel: 0.0,
            turn_signal: TurnSignal::Left,
        };
        let thresh = [50.0, 75.0, 100.0, 150.0, 300.0][rng.random_range(0..5)];
        let direction = if rng.random_bool(0.5) { Direction::Left } else { Direction::Right };
        let n = rng.random_range(0..12);
        let mut map = LocalObjectMap::new(1.0);
        let mut truth = HashMap::new();
        let mut vehicles = Vec::new();
        for i in 1..=n {
            let id = VehicleId(rng.random_range(1..1000));
            if truth.contains_key(&id) {
                continue;
            }
            // integer positions make exact gap ties common
            let s = hv_s - rng.random_range(-40..320) as f64;
            let lane = rng.random_range(0..3);
            let p = track.pose_at(s, track.lane_center(lane));
            map.update(
                Bsm {
                    sender_id: id,
                    timestamp_ms: i,
                    x: p.x,
                    y: p.y,
                    ..hv
                },
                0,
            );
            truth.insert(id, random_offset(&mut rng));
            vehicles.push((id, hv_s - s));
        }
        let candidates = find_trailing(&map, &hv, GapMeasure::Track(&track), thresh);
        let got = recognize_tv(&candidates, direction, |c| truth[&c.id]).tv_id;
        let want = vehicles
            .iter()
            .filter(|(id, gap)| {
                *gap > 0.0 && *gap <= thresh && truth[id].is_ok_and(|o| o.lanes == direction.lane_offset())
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(id, _)| *id);
        agree += usize::from(got == want);
    }
    verdict(agree == cases, format!("{agree}/{cases} agree"))
}

fn geometry_properties(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst_closure: f64 = 0.0;
    for radius in [12.0, 20.0, 40.0, 80.0, 250.0] {
        for track in [
            build_octagon_track(80.0, radius, 3, 3.5).unwrap(),
            build_ring_track(radius, 3, 3.5).unwrap(),
        ] {
            let end = track.segments.last().unwrap().end_pose();
            let start = &track.segments[0].start_pose;
            worst_closure = worst_closure.max(end.distance_to(start));
        }
    }
    if worst_closure > 1e-6 {
        return Err(format!("closure error {worst_closure:e} m"));
    }
    let track = build_octagon_track(80.0, 40.0, 3, 3.5).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..20_000 {
        let lane = rng.random_range(0..3);
        let pos = TrackPosition::new(rng.random_range(0.0..track.total_length), lane, rng.random_range(-1.7..1.7));
        let pose = track.to_world(&pos).unwrap();
        let back = track.project_to_track(&pose).unwrap();
        if back.lane != lane {
            return Err(format!("lane changed on round trip at {pos:?}"));
        }
        let ds = track.longitudinal_gap(back.s, pos.s).min(track.longitudinal_gap(pos.s, back.s));
        worst = worst.max(ds).max((back.lateral_offset - pos.lateral_offset).abs());
    }
    if worst > 1e-6 {
        return Err(format!("projection round trip error {worst:e} m"));
    }
    Ok(format!("closure {worst_closure:.1e} m, projection {worst:.1e} m"))
}

fn codec_properties(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let signals = [TurnSignal::Off, TurnSignal::Left, TurnSignal::Right];
    let apps = [
        AppType::LaneChange,
        AppType::StopSignRow,
        AppType::SlowTraffic,
        AppType::Tailgating,
        AppType::LateGreen,
    ];
    for _ in 0..10_000 {
        let mut f = || rng.random_range(-1e6..1e6);
        let b = Bsm {
            sender_id: VehicleId(0),
            timestamp_ms: 0,
            x: f(),
            y: f(),
            heading: f(),
            speed: f(),
            yaw_rate: f(),
            accel: f(),
            turn_signal: TurnSignal::Off,
        };
        let b = Bsm {
            sender_id: VehicleId(rng.random()),
            timestamp_ms: rng.random(),
            turn_signal: signals[rng.random_range(0..3)],
            ..b
        };
        let bytes = encode_bsm(&b).map_err(|e| e.to_string())?;
        if decode_bsm(&bytes).map_err(|e| e.to_string())? != b {
            return Err(format!("bsm round trip failed for {b:?}"));
        }
        let sender: u32 = rng.random();
        let d = Dim {
            sender_id: VehicleId(sender),
            target_id: VehicleId(sender.wrapping_add(rng.random_range(1..u32::MAX))),
            app_type: apps[rng.random_range(0..apps.len())],
            direction: if rng.random_bool(0.5) { Direction::Left } else { Direction::Right },
            timestamp_ms: rng.random(),
        };
        let bytes = encode_dim(&d).map_err(|e| e.to_string())?;
        if decode_dim(&bytes).map_err(|e| e.to_string())? != d {
            return Err(format!("dim round trip failed for {d:?}"));
        }
    }
    Ok("10000 bsm and dim round trips".into())
}

/// Full-length run with lane changes, checking every bumper gap every tick.
fn collision_free() -> Result<String, String> {
    let config = SimConfig::default();
    let track = build_octagon_track(80.0, 40.0, 3, 3.5).unwrap();
    let mut world = World::initial(&track, &config);
    let mut scheduler = IntentScheduler::new(config.intent_period_ms());
    let mut min_gap = f64::INFINITY;
    let mut changes = 0;
    for _ in 0..config.total_ticks() {
        let lane = world.host().pos.lane;
        if let Some(dir) = scheduler.poll(world.time_ms(), lane, track.lane_count) {
            world.signal_intent(&track, dir, config.lane_change_duration);
            world.start_pending_maneuver(&track);
        }
        let report = world.step(&track).map_err(|e| e.to_string())?;
        changes += usize::from(report.completed.is_some());
        for (_, gap) in world.leaders(&track).into_iter().flatten() {
            min_gap = min_gap.min(gap);
        }
    }
    if min_gap < 0.0 {
        return Err(format!("negative gap {min_gap}"));
    }
    Ok(format!("{} ticks, {changes} lane changes, min gap {min_gap:.2} m", config.total_ticks()))
}

fn truth_table() -> Result<String, String> {
    let ids = [None, Some(VehicleId(1)), Some(VehicleId(2))];
    for p in ids {
        for t in ids {
            let want = match (p, t) {
                (None, None) => Outcome::TrueNegative,
                (None, Some(_)) => Outcome::FalseNegative,
                (Some(a), Some(b)) if a == b => Outcome::TruePositive,
                (Some(_), _) => Outcome::FalsePositive,
            };
            if classify(p, t) != want {
                return Err(format!("classify({p:?}, {t:?}) != {want:?}"));
            }
        }
    }
    Ok("9/9 cases".into())
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
        out.insert(rel, fs::read(&entry).unwrap());
    }
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files.extend(walk(&p));
        } else {
            files.push(p);
        }
    }
    files
}

fn determinism(first: &Path) -> Result<String, String> {
    let second = tempfile::tempdir().unwrap();
    run_matrix(&ExperimentConfig::default(), second.path()).map_err(|e| e.to_string())?;
    let (a, b) = (dir_bytes(first), dir_bytes(second.path()));
    if a != b {
        return Err("matrix outputs differ between identical runs".into());
    }
    // a lossy channel makes the seed matter
    let mut lossy = ExperimentConfig::default();
    lossy.sim.channel_loss_prob = 0.2;
    lossy.sim.duration = 2000.0;
    lossy.matrix.thresholds = vec![100.0];
    lossy.matrix.modes = vec![Mode::DmsPh];
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let d = tempfile::tempdir().unwrap();
            run_matrix(&lossy, d.path()).unwrap();
            dir_bytes(d.path())
        })
        .collect();
    if runs[0] != runs[1] {
        return Err("lossy runs differ for the same seed".into());
    }
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok(format!("{} files, {bytes} bytes identical", a.len()))
}

fn property_suites(matrix_dir: &Path) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let checks: Vec<(&str, Result<String, String>)> = vec![
        ("geometry", geometry_properties(&mut rng)),
        ("codec", codec_properties(&mut rng)),
        ("collisions", collision_free()),
        ("truth table", truth_table()),
        ("determinism", determinism(matrix_dir)),
    ];
    let pass = checks.iter().all(|(_, r)| r.is_ok());
    let detail = checks
        .into_iter()
        .map(|(name, r)| match r {
            Ok(s) => format!("{name}: {s}"),
            Err(s) => format!("{name}: FAILED {s}"),
        })
        .collect::<Vec<_>>()
        .join("; ");
    verdict(pass, detail)
}

/// Drives the host with a random speed profile, firing lane changes at the
/// given ticks, and returns its path history.
fn drive(
    track: &TrackSpec,
    rng: &mut ChaCha8Rng,
    start_s: f64,
    changes: &[(u64, Direction)],
) -> PathHistoryBuffer {
    let speed = rng.random_range(3.0..36.0);
    let host = VehicleState::new(VehicleId(0), TrackPosition::new(start_s, 1, 0.0), speed, 3.5, speed);
    let mut w = World::from_vehicles(track, vec![host], VehicleId(0), 0.1, KraussParams::default(), 0);
    let mut ph = PathHistoryBuffer::new(300.0, 1.0);
    let mut travelled = 0.0;
    let record = |w: &World, ph: &mut PathHistoryBuffer| {
        let b = bsm_from_state(track, w.host(), w.time_ms());
        ph.append_sample(PathHistoryPoint {
            x: b.x,
            y: b.y,
            heading: b.heading,
            speed: b.speed,
            yaw_rate: b.yaw_rate,
            timestamp_ms: b.timestamp_ms,
        })
        .unwrap();
    };
    record(&w, &mut ph);
    let mut target = speed;
    while w.tick < 75 || (travelled < 250.0 && w.tick < 400) {
        if w.tick.is_multiple_of(20) {
            target = rng.random_range(3.0..36.0);
        }
        // slow down no harder than the deceleration cap allows
        let host = w.vehicle_mut(VehicleId(0));
        host.v_max = target.max(host.speed - host.decel_cap * 0.1);
        if let Some(&(_, d)) = changes.iter().find(|(t, _)| *t == w.tick) {
            assert!(w.signal_intent(track, d, 3.0));
            w.start_pending_maneuver(track);
        }
        w.step(track).unwrap();
        travelled += w.host().speed * w.dt;
        record(&w, &mut ph);
    }
    ph
}

fn lane_change_detection() -> Verdict {
    let straight = build_octagon_track(2000.0, 40.0, 3, 3.5).unwrap();
    let circles: Vec<_> = [20.0, 40.0, 80.0]
        .into_iter()
        .map(|r| (r, build_ring_track(r, 3, 3.5).unwrap()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let profiles = 100;
    let mut hits: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..profiles {
        let s = rng.random_range(50.0..1000.0);
        let cases = [
            ("left", vec![(5, Direction::Left)], 1),
            ("right", vec![(5, Direction::Right)], -1),
            ("left-then-right", vec![(5, Direction::Left), (40, Direction::Right)], 0),
        ];
        for (name, changes, want) in cases {
            let ph = drive(&straight, &mut rng, s, &changes);
            *hits.entry(name.to_string()).or_default() += usize::from(ph.lane_shift_since(0, 3.5) == want);
        }
        for (r, track) in &circles {
            let s = rng.random_range(0.0..track.total_length);
            let ph = drive(track, &mut rng, s, &[]);
            *hits.entry(format!("circle R{r}")).or_default() += usize::from(ph.lane_shift_since(0, 3.5) == 0);
        }
    }
    let pass = hits.values().all(|&h| h == profiles);
    let detail = hits
        .iter()
        .map(|(k, v)| format!("{k} {v}/{profiles}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(pass, detail)
}

fn main() -> ExitCode {
    let matrix_dir = tempfile::tempdir().unwrap();
    let summary = run_matrix(&ExperimentConfig::default(), matrix_dir.path()).expect("default matrix");
    let matrix = parse_matrix(&summary);

    let results = [
        ("path history accuracy at or above lateral-only at every threshold", ph_beats_lateral(&matrix)),
        ("path history TP rises and TN falls from 50 m to 150 m", threshold_trend(&matrix)),
        ("headway with path history above no-DMS, overall and below 100 m", headway_gain(&matrix)),
        ("curved two-lane benchmark replay", benchmark_replay()),
        ("recognition matches brute-force oracle", oracle_equivalence()),
        ("geometry, codec, dynamics and determinism properties", property_suites(matrix_dir.path())),
        ("path history lane-change detection", lane_change_detection()),
    ];
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!(
            "acceptance {} {}: {} ({})",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            name,
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!("{} of {} acceptance checks passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
