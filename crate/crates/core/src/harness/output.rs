use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::dms::SkipReason;
use crate::metrics::{aggregate, ExperimentResult, HeadwayRecord, RecognitionEvent};
use crate::traffic::SimError;
use crate::types::{Direction, VehicleId};
use crate::v2x::trace::TraceError;

use super::config::{ConfigError, ExperimentConfig, RunSpec};
use super::scenario::{run_scenario, IntentDiagnostics, ScenarioOutput};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{run}: {source}")]
    Sim {
        run: String,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{0}")]
    Replay(String),
    #[error("output error: {0}")]
    Io(#[from] io::Error),
    #[error("output error: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub const EVENT_COLUMNS: [&str; 8] = ["t_ms", "method", "thresh", "direction", "outcome", "predicted", "truth", "candidates"];
pub const HEADWAY_COLUMNS: [&str; 5] = ["window", "t", "space_headway", "time_headway", "initial_gap"];
pub const DIAGNOSTIC_COLUMNS: [&str; 8] = ["t_ms", "method", "thresh", "candidate", "gap", "raw_offset", "lanes", "skipped"];

#[derive(Serialize)]
struct EventRow<'a> {
    t_ms: u64,
    method: &'a str,
    thresh: f64,
    direction: Direction,
    outcome: &'a str,
    predicted: Option<VehicleId>,
    truth: Option<VehicleId>,
    candidates: usize,
}

#[derive(Serialize)]
struct DiagnosticRow<'a> {
    t_ms: u64,
    method: &'a str,
    thresh: f64,
    candidate: VehicleId,
    gap: f64,
    raw_offset: Option<f64>,
    lanes: Option<i32>,
    skipped: Option<SkipReason>,
}

fn csv_writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>, csv::Error> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(header)?;
    Ok(wr)
}

pub fn write_events_csv<W: Write>(w: W, method: &str, thresh: f64, events: &[RecognitionEvent]) -> Result<(), csv::Error> {
    let mut wr = csv_writer(w, &EVENT_COLUMNS)?;
    for e in events {
        wr.serialize(EventRow {
            t_ms: e.t_ms,
            method,
            thresh,
            direction: e.direction,
            outcome: e.outcome.as_str(),
            predicted: e.predicted,
            truth: e.truth,
            candidates: e.candidates,
        })?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_headway_csv<W: Write>(w: W, records: &[HeadwayRecord]) -> Result<(), csv::Error> {
    let mut wr = csv_writer(w, &HEADWAY_COLUMNS)?;
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_diagnostics_csv<W: Write>(
    w: W,
    method: &str,
    thresh: f64,
    diagnostics: &[IntentDiagnostics],
) -> Result<(), csv::Error> {
    let mut wr = csv_writer(w, &DIAGNOSTIC_COLUMNS)?;
    for d in diagnostics {
        for c in &d.candidates {
            wr.serialize(DiagnosticRow {
                t_ms: d.t_ms,
                method,
                thresh,
                candidate: c.id,
                gap: c.gap,
                raw_offset: c.offset.ok().map(|o| o.raw),
                lanes: c.offset.ok().map(|o| o.lanes),
                skipped: c.offset.err(),
            })?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    // serde_json's default map is ordered by key
    let v = serde_json::to_value(value).expect("serializable");
    let mut out = serde_json::to_vec_pretty(&v).expect("serializable");
    out.push(b'\n');
    out
}

/// Summary object for one run.
pub fn run_summary(spec: &RunSpec, out: &ScenarioOutput, result: &ExperimentResult) -> Value {
    json!({
        "index": spec.index,
        "name": spec.name(),
        "mode": spec.sim.mode,
        "thresh": spec.sim.tv_dist_thresh,
        "seed": spec.sim.rng_seed,
        "result": result,
        "lane_changes": out.lane_changes,
        "aborted_maneuvers": out.aborted_maneuvers,
        "dims_sent": out.dims_sent,
        "dims_delivered": out.dims_delivered,
        "max_map_age_ms": out.max_map_age_ms,
        "ticks": out.ticks,
    })
}

/// Writes `events.csv`, `diagnostics.csv`, `headway.csv` and `summary.json`
/// into `dir`.
pub fn emit_run(dir: &Path, spec: &RunSpec, out: &ScenarioOutput) -> Result<Value, HarnessError> {
    fs::create_dir_all(dir)?;
    let method = spec.sim.mode.as_str();
    let thresh = spec.sim.tv_dist_thresh;
    let result = aggregate(&out.events, &out.headway);
    write_events_csv(io::BufWriter::new(fs::File::create(dir.join("events.csv"))?), method, thresh, &out.events)?;
    write_diagnostics_csv(
        io::BufWriter::new(fs::File::create(dir.join("diagnostics.csv"))?),
        method,
        thresh,
        &out.diagnostics,
    )?;
    write_headway_csv(io::BufWriter::new(fs::File::create(dir.join("headway.csv"))?), &out.headway)?;
    let summary = run_summary(spec, out, &result);
    fs::write(dir.join("summary.json"), json_bytes(&summary))?;
    Ok(summary)
}

/// Runs every (threshold, mode) pair in parallel and writes one directory per
/// run plus a combined `summary.json` under `out_dir`.
pub fn run_matrix(config: &ExperimentConfig, out_dir: &Path) -> Result<Value, HarnessError> {
    config.validate()?;
    let track = config.track.build()?;
    fs::create_dir_all(out_dir)?;
    let runs = config.runs();
    let summaries: Vec<Value> = runs
        .par_iter()
        .map(|spec| {
            let out = run_scenario(&track, &spec.sim).map_err(|source| HarnessError::Sim {
                run: spec.name(),
                source,
            })?;
            emit_run(&out_dir.join(spec.name()), spec, &out)
        })
        .collect::<Result<_, _>>()?;
    let combined = json!({
        "config": config,
        "runs": summaries,
    });
    fs::write(out_dir.join("summary.json"), json_bytes(&combined))?;
    Ok(combined)
}
