//! Command-line pipeline for radio map construction.
//!
//! Subcommands:
//!
//! * `simulate <scenario.json> -o DIR` — run a synthetic survey scenario;
//!   writes one trace CSV per walker, the truth grid CSV, and the
//!   ground-truth positions CSV.
//! * `build <trace.csv ...> --grid-origin LAT,LON --cell-size M --rows R
//!   --cols C -o DIR` — construct a map from traces; writes the
//!   pre-interpolation grid, the complete grid, metadata JSON, a PGM
//!   heatmap, and the defect report.
//! * `eval <map.csv> <truth.csv>` — score a map against a truth grid.
//!
//! Exit codes: 0 success, 1 input error, 2 empty result (no usable
//! measurements).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use radiomap::builder::{build_map, BuildError, BuildParams, SmoothingConfig};
use radiomap::defects::{DEFAULT_SIGMA_WINDOW, DEFAULT_STUCK_MIN_LEN};
use radiomap::export::{
    parse_grid_csv, write_defect_report_jsonl, write_grid_csv, write_metadata_json, write_pgm,
};
use radiomap::geo::{GeoPoint, GridSpec};
use radiomap::simulator::{evaluate_grids, Scenario};
use radiomap::trace::{parse_trace, validate_trace, write_trace_csv, SurveyTrace, ValidationIssue};

const EXIT_INPUT_ERROR: u8 = 1;
const EXIT_EMPTY_RESULT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "radiomap",
    version,
    about = "Radio map construction from GPS+RSSI survey traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a synthetic survey scenario and emit its traces and truth grid.
    Simulate(SimulateArgs),
    /// Build a radio map from one or more trace CSV files.
    Build(BuildArgs),
    /// Score a map grid against a truth grid.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(short = 'o', long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BuildArgs {
    /// Trace CSV files (at least one).
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    /// Grid origin (southwest corner) as LAT,LON in degrees.
    #[arg(long, value_parser = parse_lat_lon)]
    grid_origin: (f64, f64),
    /// Cell edge length in meters.
    #[arg(long)]
    cell_size: f64,
    /// Number of grid rows (northward).
    #[arg(long)]
    rows: usize,
    /// Number of grid columns (eastward).
    #[arg(long)]
    cols: usize,
    /// Smoothing factor in (0, 1).
    #[arg(long, default_value_t = SmoothingConfig::DEFAULT_ALPHA)]
    alpha: f64,
    /// Trailing window for the positional sigma estimate.
    #[arg(long, default_value_t = DEFAULT_SIGMA_WINDOW)]
    sigma_window: usize,
    /// Minimum run of identical fixes that counts as a frozen segment.
    #[arg(long, default_value_t = DEFAULT_STUCK_MIN_LEN)]
    stuck_min_len: usize,
    /// Disable the 2-sigma disc update (plain single-cell updates).
    #[arg(long)]
    no_disc_update: bool,
    /// Disable frozen-fix interpolation.
    #[arg(long)]
    no_stuck_correction: bool,
    /// Output directory (created if missing).
    #[arg(short = 'o', long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Map grid CSV.
    map: PathBuf,
    /// Truth grid CSV.
    truth: PathBuf,
}

fn parse_lat_lon(raw: &str) -> Result<(f64, f64), String> {
    let (lat, lon) = raw
        .split_once(',')
        .ok_or_else(|| format!("expected LAT,LON, got `{raw}`"))?;
    let lat: f64 = lat
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse latitude `{lat}`"))?;
    let lon: f64 = lon
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse longitude `{lon}`"))?;
    Ok((lat, lon))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(EXIT_INPUT_ERROR);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Build(args) => cmd_build(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT_ERROR)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&args.scenario)
        .with_context(|| format!("cannot read scenario {}", args.scenario.display()))?;
    let scenario = match Scenario::from_json(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!(
                "error: {}: invalid scenario at {}",
                args.scenario.display(),
                e
            );
            return Ok(ExitCode::from(EXIT_INPUT_ERROR));
        }
    };
    let out = scenario
        .run()
        .map_err(|e| anyhow::anyhow!("scenario failed at {e}"))?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let mut positions_csv = String::from("t_s,source_id,x_m,y_m\n");
    for walker in &out.walkers {
        let name = format!("trace_{}.csv", walker.trace.source_id);
        write_file(&args.out_dir.join(name), &write_trace_csv(&walker.trace))?;
        for (sample, pos) in walker.trace.samples.iter().zip(&walker.truth_positions) {
            positions_csv.push_str(&format!(
                "{},{},{},{}\n",
                sample.t, walker.trace.source_id, pos.x, pos.y
            ));
        }
    }
    write_file(
        &args.out_dir.join("truth_grid.csv"),
        &write_grid_csv(&out.truth),
    )?;
    write_file(&args.out_dir.join("truth_positions.csv"), &positions_csv)?;

    println!(
        "simulated {} walker(s), {} samples total -> {}",
        out.walkers.len(),
        out.walkers.iter().map(|w| w.trace.len()).sum::<usize>(),
        args.out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Timestamp-order issues break pipeline assumptions and fail the build;
/// anything else is reported and left to the builder's drop policy.
fn is_fatal(issue: &ValidationIssue) -> bool {
    matches!(
        issue,
        ValidationIssue::NonMonotoneTimestamp { .. } | ValidationIssue::DuplicateTimestamp { .. }
    )
}

fn cmd_build(args: BuildArgs) -> Result<ExitCode> {
    let origin = GeoPoint::new(args.grid_origin.0, args.grid_origin.1)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let spec = GridSpec::new(origin, args.cell_size, args.rows, args.cols)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let smoothing = SmoothingConfig::new(args.alpha).map_err(|e| anyhow::anyhow!("{e}"))?;
    let params = BuildParams {
        smoothing,
        sigma_window: args.sigma_window,
        stuck_min_len: args.stuck_min_len,
        disc_update_enabled: !args.no_disc_update,
        stuck_correction_enabled: !args.no_stuck_correction,
    };

    let mut traces: Vec<SurveyTrace> = Vec::new();
    for path in &args.traces {
        let source_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trace".into());
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read trace {}", path.display()))?;
        let trace = parse_trace(&text, source_id)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let issues = validate_trace(&trace, Some(&spec));
        for issue in &issues {
            if is_fatal(issue) {
                anyhow::bail!("{}: {issue}", path.display());
            }
            eprintln!("warning: {}: {issue}", path.display());
        }
        traces.push(trace);
    }

    let out = match build_map(&traces, &spec, &params) {
        Ok(out) => out,
        Err(BuildError::NoMeasurements) => {
            eprintln!("error: no usable measurements landed in the grid");
            return Ok(ExitCode::from(EXIT_EMPTY_RESULT));
        }
        Err(e) => return Err(e.into()),
    };

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    write_file(
        &args.out_dir.join("map_raw.csv"),
        &write_grid_csv(&out.raw.to_grid()),
    )?;
    write_file(
        &args.out_dir.join("map.csv"),
        &write_grid_csv(&out.map.to_grid()),
    )?;
    write_file(
        &args.out_dir.join("map_meta.json"),
        &write_metadata_json(&out.map),
    )?;
    write_file(
        &args.out_dir.join("map.pgm"),
        &write_pgm(&out.map.to_grid()),
    )?;
    write_file(
        &args.out_dir.join("defects.jsonl"),
        &write_defect_report_jsonl(&out.segments),
    )?;

    let defects = &out.map.meta().defects;
    println!(
        "built {}x{} map: {} measured, {} interpolated cells -> {}",
        spec.rows(),
        spec.cols(),
        out.map.measured_count(),
        out.map.interpolated_count(),
        args.out_dir.display()
    );
    println!(
        "defects: {} stuck segment(s), {} epoch(s) repaired, {} unresumed epoch(s) dropped, {} sample(s) out of grid",
        defects.stuck_segments, defects.repaired_epochs, defects.dropped_unresumed_epochs, defects.dropped_out_of_grid
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let map_text = fs::read_to_string(&args.map)
        .with_context(|| format!("cannot read {}", args.map.display()))?;
    let truth_text = fs::read_to_string(&args.truth)
        .with_context(|| format!("cannot read {}", args.truth.display()))?;
    let map =
        parse_grid_csv(&map_text).map_err(|e| anyhow::anyhow!("{}: {e}", args.map.display()))?;
    let truth = parse_grid_csv(&truth_text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.truth.display()))?;
    let report = match evaluate_grids(&map, &truth) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_INPUT_ERROR));
        }
    };
    println!("rmse_db: {:.6}", report.rmse_db);
    println!("max_abs_error_db: {:.6}", report.max_abs_error_db);
    println!(
        "argmax_match: {} (map ({}, {}) vs truth ({}, {}))",
        if report.peak_match { "yes" } else { "no" },
        report.map_peak.row,
        report.map_peak.col,
        report.truth_peak.row,
        report.truth_peak.col
    );
    println!(
        "{}",
        serde_json::to_string(&report).expect("report serializes")
    );
    Ok(ExitCode::SUCCESS)
}
