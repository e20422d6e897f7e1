//! `onramp` command-line interface.
//!
//! Configuration precedence is flag > scenario file > built-in default:
//! `--override key=value` and the dedicated numeric flags are applied on top
//! of the scenario document, the dedicated flags last.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use onramp::report::{load_summary, Summary};
use onramp::scenario::{apply_override, bundled, bundled_names, resolve};
use onramp::sim::{write_csv, write_series};
use onramp::validate;
use onramp::{Error, ScenarioSpec};

const EXIT_IO: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_UNSAFE: u8 = 3;

#[derive(Parser)]
#[command(name = "onramp", version, about = "Mixed-traffic on-ramp merging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory CSV, summary JSON and plot series.
    Run(RunArgs),
    /// Simulate a scenario and report savings against a baseline summary.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Summary JSON of the baseline run.
        #[arg(long)]
        baseline: PathBuf,
    },
    /// Run the oracle suites and print a pass/fail table.
    Validate,
    /// List the bundled scenarios.
    ListScenarios,
}

#[derive(Args, Serialize)]
struct RunArgs {
    /// Bundled scenario name or path to a scenario JSON file.
    scenario: String,
    /// Dotted-path override, e.g. `controller.v_des=25`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Sampling interval, s (`controller.sample_dt`).
    #[arg(long)]
    dt: Option<f64>,
    /// Scenario seed (`seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated horizon, s (`duration`).
    #[arg(long)]
    duration: Option<f64>,
    /// Output directory. Defaults to `out/<scenario name>`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Io(_)) | Some(Error::Csv(_)) => EXIT_IO,
            Some(_) => EXIT_INVALID,
            None if error.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
            None => EXIT_INVALID,
        };
        Self { code, error }
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

fn resolve_spec(args: &RunArgs) -> Result<ScenarioSpec> {
    let mut spec = resolve(&args.scenario)?;
    for ov in &args.overrides {
        let (key, value) = ov
            .split_once('=')
            .with_context(|| format!("override `{ov}` is not KEY=VALUE"))?;
        spec = apply_override(&spec, key, value)?;
    }
    if let Some(dt) = args.dt {
        spec = apply_override(&spec, "controller.sample_dt", &dt.to_string())?;
    }
    if let Some(seed) = args.seed {
        spec = apply_override(&spec, "seed", &seed.to_string())?;
    }
    if let Some(duration) = args.duration {
        spec = apply_override(&spec, "duration", &duration.to_string())?;
    }
    spec.validate()?;
    Ok(spec)
}

fn write_outputs(dir: &Path, log: &onramp::SimLog, summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(log, dir.join("trajectory.csv"))?;
    write_series(log, dir.join("series"))?;
    summary.write(dir.join("summary.json"))?;
    Ok(())
}

fn simulate(args: &RunArgs, baseline: Option<&Path>) -> Result<u8, Failure> {
    let spec = resolve_spec(args)?;
    let baseline = baseline
        .map(|p| load_summary(p).with_context(|| format!("reading baseline {}", p.display())))
        .transpose()?;
    let log = onramp::run(&spec)?;
    let manifest = serde_json::to_value(args).map_err(anyhow::Error::from)?;
    let mut summary = Summary::new(&log, manifest);
    if let Some(b) = &baseline {
        summary = summary.compared_to(&b.metrics);
    }
    let dir = args
        .output_dir
        .clone()
        .unwrap_or_else(|| Path::new("out").join(&spec.name));
    write_outputs(&dir, &log, &summary).map_err(|error| Failure { code: EXIT_IO, error })?;

    let m = &summary.metrics;
    println!("scenario {}  ({} vehicles, {} steps)", spec.name, log.vehicles.len(), log.steps.len());
    for (kind, n) in &summary.event_counts {
        println!("  {kind:<17} {n}");
    }
    let fmt = |x: Option<f64>, scale: f64| x.map_or("n/a".into(), |x| format!("{:.4}", x * scale));
    println!("  average travel time  {} s", fmt(m.average_travel_time, 1.0));
    println!("  average energy       {} MJ", fmt(m.average_energy, 1e-6));
    if let Some(c) = &summary.comparison {
        println!("  vs baseline          time saving {} %, energy saving {} %",
            fmt(c.time_saving, 100.0), fmt(c.energy_saving, 100.0));
    }
    println!("  outputs in {}", dir.display());

    if log.halted || log.count("COLLISION") > 0 {
        eprintln!("error: collision, run halted");
        return Ok(EXIT_UNSAFE);
    }
    if !m.is_complete() {
        eprintln!("error: vehicles {:?} never reached the merge point", m.incomplete);
        return Ok(EXIT_UNSAFE);
    }
    Ok(0)
}

fn cmd_validate() -> u8 {
    let reports = validate::run_all();
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &reports {
        let mark = if r.passed { "PASS" } else { "FAIL" };
        println!("{mark}  {:<width$}  {}", r.name, r.detail);
    }
    if reports.iter().all(|r| r.passed) { 0 } else { EXIT_INVALID }
}

fn cmd_list() -> Result<u8, Failure> {
    for name in bundled_names() {
        let spec = bundled(name)?;
        println!("{name:<16} {:>3} vehicles  {:>5} s", spec.arrivals.len(), spec.duration);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => simulate(args, None),
        Command::Compare { run, baseline } => simulate(run, Some(baseline)),
        Command::Validate => Ok(cmd_validate()),
        Command::ListScenarios => cmd_list(),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
