#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dms_core::harness::output::{emit_run, json_bytes, run_matrix, HarnessError};
use dms_core::harness::replay::{
    generate_benchmark, read_annotations, run_replay, write_annotations, write_replay_csv, BenchmarkParams,
    ReplayReport, ReplayScenario, ReplaySummary,
};
use dms_core::harness::scenario::{method_for, run_scenario};
use dms_core::harness::{ConfigError, ExperimentConfig};
use dms_core::traffic::Mode;
use dms_core::types::{Direction, VehicleId};
use dms_core::v2x::trace::{read_trace, write_trace};

#[derive(Parser)]
#[command(name = "dms-sim", version, about = "Driver messenger system experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "DMS_OUT_DIR", default_value = "results")]
    out_dir: PathBuf,
    /// Trailing distance threshold in metres (repeatable for `matrix`).
    #[arg(long = "threshold")]
    thresholds: Vec<f64>,
    /// dms_ph, dms_lateral or no_dms (repeatable for `matrix`).
    #[arg(long = "mode")]
    modes: Vec<Mode>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every threshold and mode combination.
    Matrix(Common),
    /// Run a single scenario.
    Run {
        #[command(flatten)]
        common: Common,
        /// Override the simulated duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Replay a BSM trace through the recognizer.
    Replay {
        /// Trace file; `.csv` is read as CSV, anything else as binary.
        #[arg(long)]
        trace: PathBuf,
        /// CSV of expected target vehicles per intent, for scoring.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        hv_id: u32,
        /// Seconds between intents.
        #[arg(long, default_value_t = 10.0)]
        period: f64,
        #[arg(long, value_enum, default_value_t = Side::Left)]
        direction: Side,
        #[arg(long, default_value_t = 300.0)]
        threshold: f64,
        /// Recognition modes to replay with.
        #[arg(long = "mode", default_values = ["dms_ph", "dms_lateral"])]
        modes: Vec<Mode>,
        #[arg(long, env = "DMS_OUT_DIR", default_value = "results")]
        out_dir: PathBuf,
    },
    /// Write the synthetic curved-road benchmark trace and its annotations.
    GenTrace {
        /// Trace output; `.csv` writes CSV, anything else binary.
        #[arg(long, default_value = "benchmark.bin")]
        out: PathBuf,
        /// Annotation output; defaults to `<out>.annotations.csv`.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value_t = 40.0)]
        radius: f64,
        #[arg(long, default_value_t = 30.0)]
        speed: f64,
        #[arg(long, default_value_t = 240.0)]
        duration: f64,
        #[arg(long, default_value_t = 10.0)]
        period: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Side {
    Left,
    Right,
}

fn load_config(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.matrix.base_seed = seed;
    }
    if !common.thresholds.is_empty() {
        cfg.matrix.thresholds = common.thresholds.clone();
    }
    if !common.modes.is_empty() {
        cfg.matrix.modes = common.modes.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_error(key: &str, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config(ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    })
}

fn matrix(common: &Common) -> Result<(), HarnessError> {
    let cfg = load_config(common)?;
    let summary = run_matrix(&cfg, &common.out_dir)?;
    for run in summary["runs"].as_array().into_iter().flatten() {
        let p = &run["result"]["percentages"];
        println!(
            "{:<28} TP {:>6.2}%  FP {:>6.2}%  TN {:>6.2}%  FN {:>6.2}%  space {}",
            run["name"].as_str().unwrap_or_default(),
            p["TP"].as_f64().unwrap_or(0.0),
            p["FP"].as_f64().unwrap_or(0.0),
            p["TN"].as_f64().unwrap_or(0.0),
            p["FN"].as_f64().unwrap_or(0.0),
            run["result"]["mean_space_headway"],
        );
    }
    println!("wrote {}", common.out_dir.join("summary.json").display());
    Ok(())
}

fn run_one(common: &Common, duration: Option<f64>) -> Result<(), HarnessError> {
    if common.thresholds.len() > 1 || common.modes.len() > 1 {
        return Err(config_error("run", "takes at most one --threshold and one --mode"));
    }
    let mut cfg = load_config(common)?;
    cfg.matrix.thresholds.truncate(1);
    cfg.matrix.modes.truncate(1);
    if let Some(d) = duration {
        cfg.sim.duration = d;
    }
    cfg.validate()?;
    let track = cfg.track.build()?;
    let spec = cfg.runs().remove(0);
    let out = run_scenario(&track, &spec.sim).map_err(|source| HarnessError::Sim {
        run: spec.name(),
        source,
    })?;
    let dir = common.out_dir.join(spec.name());
    let summary = emit_run(&dir, &spec, &out)?;
    println!("{}", String::from_utf8_lossy(&json_bytes(&summary["result"])));
    println!("wrote {}", dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn replay(
    trace: &Path,
    annotations: Option<&Path>,
    hv_id: u32,
    period: f64,
    direction: Side,
    threshold: f64,
    modes: &[Mode],
    out_dir: &Path,
) -> Result<(), HarnessError> {
    if !(period > 0.0) {
        return Err(config_error("period", "must be > 0"));
    }
    if !(threshold > 0.0) {
        return Err(config_error("threshold", "must be > 0"));
    }
    let scenario = ReplayScenario {
        hv_id: VehicleId(hv_id),
        intent_period_ms: (period * 1000.0).round() as u64,
        direction: match direction {
            Side::Left => Direction::Left,
            Side::Right => Direction::Right,
        },
        tv_dist_thresh: threshold,
        ..ReplayScenario::default()
    };
    let bsms = read_trace(trace)?;
    let ann = annotations.map(read_annotations).transpose()?;
    std::fs::create_dir_all(out_dir)?;
    let mut results = Vec::new();
    for &mode in modes {
        let method = method_for(mode).ok_or_else(|| config_error("mode", "replay needs dms_ph or dms_lateral"))?;
        let events = run_replay(&bsms, &scenario, method, ann.as_deref())?;
        let file = std::fs::File::create(out_dir.join(format!("replay_{}.csv", mode.as_str())))?;
        write_replay_csv(std::io::BufWriter::new(file), &events)?;
        let summary = ReplaySummary::new(mode, &events);
        let counts = &summary.counts;
        println!(
            "{:<12} intents {:>3}  TP {} FP {} TN {} FN {}",
            mode.as_str(),
            events.len(),
            counts.tp,
            counts.fp,
            counts.tn,
            counts.fn_
        );
        results.push(summary);
    }
    let summary = ReplayReport { scenario, results };
    std::fs::write(out_dir.join("replay_summary.json"), json_bytes(&summary))?;
    Ok(())
}

fn gen_trace(out: &Path, annotations: Option<&Path>, params: &BenchmarkParams) -> Result<(), HarnessError> {
    let trace = generate_benchmark(params)?;
    write_trace(out, &trace.bsms)?;
    let ann_path = annotations.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut name = out.as_os_str().to_owned();
        name.push(".annotations.csv");
        PathBuf::from(name)
    });
    write_annotations(&ann_path, &trace.annotations)?;
    println!(
        "wrote {} ({} records) and {} ({} intents)",
        out.display(),
        trace.bsms.len(),
        ann_path.display(),
        trace.annotations.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Matrix(common) => matrix(common),
        Command::Run { common, duration } => run_one(common, *duration),
        Command::Replay {
            trace,
            annotations,
            hv_id,
            period,
            direction,
            threshold,
            modes,
            out_dir,
        } => replay(
            trace,
            annotations.as_deref(),
            *hv_id,
            *period,
            *direction,
            *threshold,
            modes,
            out_dir,
        ),
        Command::GenTrace {
            out,
            annotations,
            radius,
            speed,
            duration,
            period,
        } => gen_trace(
            out,
            annotations.as_deref(),
            &BenchmarkParams {
                radius: *radius,
                hv_speed: *speed,
                duration: *duration,
                intent_period: *period,
                ..BenchmarkParams::default()
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
