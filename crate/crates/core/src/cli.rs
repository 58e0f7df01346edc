//! Command-line driver. Each subcommand parses its flags, calls one library
//! operation and serializes the result.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{
    allocate, calibrate, default_pilot_grid, delta_sweep, run_estimate_with, Allocation, BiasMode,
    CalibrationMode, CalibrationOptions, CalibrationResult, EstimateOptions, SimulationPlan, Sweep,
};
use crate::measurement::write_samples_csv;
use crate::operators::GammaOptions;
use crate::oscillator::{OscillatorConfig, OscillatorSystem};
use crate::systems::System;
use crate::trotter::{error_scaling_split, halving_grid, ErrorScaling, StepSeries};

const DEFAULT_SWEEP_GRID: &str = "0.0001:0.01:100";
const DEFAULT_ERROR_GRID: &str = "0.1:0.00625:halving";

#[derive(Debug, Parser)]
#[command(name = "trotter-mc", version, about = "Trotterized simulation with Monte Carlo estimation")]
pub struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate θ with a plan given by (m, n), (m, budget) or (δ, budget).
    Estimate(EstimateArgs),
    /// Exact MSE over a grid of step sizes at fixed budget.
    Sweep(SweepArgs),
    /// Fit the variance and bias constants on a pilot grid.
    Calibrate(CalibrateArgs),
    /// Split a budget into steps and replicates from C1 and C2.
    Allocate(AllocateArgs),
    /// Operator distance between product formula and exact propagator.
    TrotterError(TrotterErrorArgs),
    /// Oscillator ground-truth values by enumeration.
    OscillatorReport(OscillatorReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct Common {
    /// Builtin name (oscillator, pauli-xz) or path to a system JSON file.
    #[arg(long, default_value = "oscillator")]
    system: String,

    #[arg(long, env = "QMC_SEED", default_value_t = 0)]
    seed: u64,

    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,

    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,

    #[arg(long)]
    budget: Option<u64>,

    #[arg(long, conflicts_with = "delta")]
    m: Option<usize>,

    #[arg(long, requires = "m")]
    n: Option<usize>,

    #[arg(long)]
    delta: Option<f64>,

    /// Estimate the bias from two sample means instead of exact expectations.
    #[arg(long)]
    sampled_bias: bool,

    /// Omit wall time so reports are byte-reproducible.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,

    #[arg(long, default_value_t = 5000)]
    budget: u64,

    /// `a:b:halving`, `a:b:COUNT` (linear, inclusive) or a comma list.
    #[arg(long, default_value = DEFAULT_SWEEP_GRID)]
    deltas: String,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,

    /// Pilot grid; defaults to five log-spaced steps in [T/512, T/32].
    #[arg(long)]
    deltas: Option<String>,

    /// Also allocate this budget with the fitted constants.
    #[arg(long)]
    budget: Option<u64>,

    #[arg(long)]
    sampled: bool,

    /// Samples per pilot point in sampled mode.
    #[arg(long, default_value_t = 10_000)]
    pilot_n: usize,
}

#[derive(Debug, Args)]
struct AllocateArgs {
    #[arg(long, alias = "n-budget")]
    budget: u64,

    #[arg(long)]
    c1: f64,

    #[arg(long)]
    c2: f64,

    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrotterErrorArgs {
    #[command(flatten)]
    common: Common,

    #[arg(long, default_value = DEFAULT_ERROR_GRID)]
    deltas: String,
}

#[derive(Debug, Args)]
struct OscillatorReportArgs {
    #[arg(long, default_value_t = 6)]
    dimensions: usize,

    #[arg(long, default_value_t = 4)]
    levels: usize,

    /// Also write the step-size sweep CSV here.
    #[arg(long)]
    sweep_csv: Option<PathBuf>,

    #[arg(long, default_value_t = 5000)]
    budget: u64,

    #[arg(long, default_value = DEFAULT_SWEEP_GRID)]
    deltas: String,

    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parses `a:b:halving`, `a:b:COUNT` or `x,y,z`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::Validation(format!("bad grid '{spec}': {what}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("'{s}' is not a number")));
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [a, b, "halving"] => {
            let (a, b) = (num(a)?, num(b)?);
            if !(a > 0.0 && b > 0.0 && b <= a) {
                return Err(bad("halving needs start ≥ end > 0"));
            }
            halving_grid(a, b)
        }
        [a, b, count] => {
            let (a, b) = (num(a)?, num(b)?);
            let count: usize = count.trim().parse().map_err(|_| bad("count must be an integer or 'halving'"))?;
            if count < 2 || b.partial_cmp(&a) != Some(std::cmp::Ordering::Greater) {
                return Err(bad("linear range needs end > start and at least 2 points"));
            }
            (0..count).map(|k| a + (b - a) * k as f64 / (count - 1) as f64).collect()
        }
        [single] => single.split(',').map(num).collect::<Result<Vec<_>>>()?,
        _ => return Err(bad("expected a:b:halving, a:b:COUNT or a comma list")),
    };
    if grid.is_empty() || grid.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(bad("step sizes must be positive"));
    }
    Ok(grid)
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn estimate_plan(args: &EstimateArgs, horizon: f64) -> Result<SimulationPlan> {
    let seed = args.common.seed;
    match (args.m, args.n, args.delta, args.budget) {
        (Some(m), Some(n), None, budget) => {
            let plan = SimulationPlan::new(horizon, m, n, seed)?;
            match budget {
                Some(b) => plan.with_budget(b),
                None => Ok(plan),
            }
        }
        (Some(m), None, None, Some(b)) => SimulationPlan::from_budget(horizon, b, m, seed),
        (None, None, Some(d), Some(b)) => SimulationPlan::from_delta(horizon, b, d, seed),
        (None, None, Some(_), None) | (Some(_), None, None, None) => {
            Err(Error::Validation("--budget is required unless both --m and --n are given".into()))
        }
        _ => Err(Error::Validation("give exactly one of --delta or --m (with --n or --budget)".into())),
    }
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let system = System::resolve(&args.common.system)?;
    let sys = system.monte_carlo();
    let plan = estimate_plan(&args, sys.horizon())?;
    let opts = EstimateOptions {
        bias: if args.sampled_bias { BiasMode::Sampled } else { BiasMode::Exact },
        no_timestamp: args.no_timestamp,
    };
    let report = run_estimate_with(&plan, sys, &opts)?;
    let mut out = open_output(&args.common.output)?;
    match args.common.format.unwrap_or(Format::Json) {
        Format::Json => write_json(&mut out, &report)?,
        Format::Csv => {
            let per_replicate: Vec<Vec<f64>> = report.outcomes.iter().map(|&x| vec![x]).collect();
            write_samples_csv(&mut out, &per_replicate)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_sweep_csv(out: &mut dyn Write, sweep: &Sweep) -> Result<()> {
    sweep.write_csv(&mut *out)?;
    match sweep.argmin_delta() {
        Some(d) => writeln!(
            out,
            "# argmin delta={d} interior={} unimodal={}",
            sweep.has_interior_minimum(),
            sweep.is_unimodal()
        )?,
        None => writeln!(out, "# argmin none")?,
    }
    for s in &sweep.skipped {
        writeln!(out, "# skipped delta={} reason={}", s.delta, s.reason)?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let system = System::resolve(&args.common.system)?;
    let grid = parse_grid(&args.deltas)?;
    let sweep = delta_sweep(system.monte_carlo(), args.budget, &grid)?;
    let mut out = open_output(&args.common.output)?;
    match args.common.format.unwrap_or(Format::Csv) {
        Format::Csv => write_sweep_csv(&mut out, &sweep)?,
        Format::Json => write_json(&mut out, &sweep)?,
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CalibrationOutput {
    #[serde(flatten)]
    calibration: CalibrationResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    allocation: Option<Allocation>,
}

fn calibrate_cmd(args: CalibrateArgs) -> Result<()> {
    let system = System::resolve(&args.common.system)?;
    let sys = system.monte_carlo();
    let grid = match &args.deltas {
        Some(spec) => parse_grid(spec)?,
        None => default_pilot_grid(sys.horizon()),
    };
    let opts = CalibrationOptions {
        mode: if args.sampled { CalibrationMode::Sampled } else { CalibrationMode::Exact },
        pilot_n: args.pilot_n,
        seed: args.common.seed,
    };
    let calibration = calibrate(sys, &grid, &opts)?;
    let allocation = args.budget.map(|b| allocate(b, calibration.c1, calibration.c2)).transpose()?;
    let mut out = open_output(&args.common.output)?;
    if args.common.format == Some(Format::Csv) {
        writeln!(out, "# schema=1")?;
        writeln!(out, "delta,m,bias,bias_sq,residual")?;
        for p in &calibration.points {
            writeln!(out, "{},{},{:e},{:e},{:e}", p.delta, p.m, p.bias, p.bias_sq, p.residual)?;
        }
        writeln!(out, "# c1={:e} c2={:e} degenerate={}", calibration.c1, calibration.c2, calibration.degenerate)?;
    } else {
        write_json(&mut out, &CalibrationOutput { calibration, allocation })?;
    }
    out.flush()?;
    Ok(())
}

fn allocate_cmd(args: AllocateArgs) -> Result<()> {
    let allocation = allocate(args.budget, args.c1, args.c2)?;
    let mut out = open_output(&args.output)?;
    write_json(&mut out, &allocation)?;
    out.flush()?;
    Ok(())
}

fn write_error_csv(out: &mut dyn Write, scaling: &ErrorScaling) -> Result<()> {
    writeln!(out, "# schema=1")?;
    writeln!(out, "series,delta,j,gamma")?;
    for p in &scaling.points {
        writeln!(out, "{},{},{},{:e}", scaling.fits[p.series].label, p.delta, p.j, p.gamma)?;
    }
    for f in &scaling.fits {
        match f.fit.slope {
            Some(s) => writeln!(out, "# fit series={} slope={s:.6} points={}", f.label, f.fit.points_used)?,
            None => writeln!(out, "# fit series={} degenerate", f.label)?,
        }
    }
    Ok(())
}

fn trotter_error(args: TrotterErrorArgs) -> Result<()> {
    let system = System::resolve(&args.common.system)?;
    let grid = parse_grid(&args.deltas)?;
    let series = [StepSeries::Fixed(1), StepSeries::Horizon(system.monte_carlo().horizon())];
    let scaling = error_scaling_split(
        system.split_hamiltonian(),
        system.exact_hamiltonian(),
        &grid,
        &series,
        &GammaOptions::default(),
    )?;
    let mut out = open_output(&args.common.output)?;
    match args.common.format.unwrap_or(Format::Csv) {
        Format::Csv => write_error_csv(&mut out, &scaling)?,
        Format::Json => write_json(&mut out, &scaling)?,
    }
    out.flush()?;
    Ok(())
}

fn oscillator_report(args: OscillatorReportArgs) -> Result<()> {
    let sys = OscillatorSystem::new(OscillatorConfig {
        dimensions: args.dimensions,
        levels: args.levels,
        ..OscillatorConfig::default()
    })?;
    let mut out = open_output(&args.output)?;
    write_json(&mut out, &sys.ground_truth())?;
    out.flush()?;
    if let Some(path) = &args.sweep_csv {
        let sweep = delta_sweep(&sys, args.budget, &parse_grid(&args.deltas)?)?;
        let mut csv = BufWriter::new(File::create(path)?);
        write_sweep_csv(&mut csv, &sweep)?;
        csv.flush()?;
    }
    Ok(())
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Validation("--threads must be at least 1".into()));
        }
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Sweep(a) => sweep(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Allocate(a) => allocate_cmd(a),
        Command::TrotterError(a) => trotter_error(a),
        Command::OscillatorReport(a) => oscillator_report(a),
    }
}

fn report_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
}

/// Exit code 0 on success, 1 for invalid input, 2 for numerical failure.
pub fn main<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            report_error("usage", e.to_string().lines().next().unwrap_or("invalid arguments"));
            return 1;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}
