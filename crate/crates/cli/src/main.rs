//! `mmw-gate`: run single scenarios and the AP/GRT and fairness sweeps.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use mmw_gate::engine::{self, RunOptions};
use mmw_gate::metrics;
use mmw_gate::model::{ConfigError, MetricsReport, MobilityMode, ScenarioConfig, SchedulerKind, ValidatedConfig};
use mmw_gate::traffic;

use output::{write_atomic, Manifest};

#[derive(Debug, Parser)]
#[command(name = "mmw-gate", version, about = "Delayed offloading through mmWave gates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its results, events and workload.
    Run(RunArgs),
    /// Sweep AP count against gate reaching time.
    Sweep(SweepArgs),
    /// Compare schedulers across user speed ratios.
    Fairness(FairnessArgs),
    /// Check a config file and print the resolved scenario.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file (TOML). Defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides `rng_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "MMW_GATE_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Replay a workload CSV instead of drawing one.
    #[arg(long)]
    workload: Option<PathBuf>,
    /// Also write per-slot positions, links and scheduler decisions.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Args)]
struct Batch {
    /// Runs per sweep point; seeds are master, master+1, ...
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    batch: Batch,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    aps: Vec<usize>,
    /// Gate reaching times in hours.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,1.5,2")]
    grt: Vec<f64>,
}

#[derive(Debug, Args)]
struct FairnessArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    batch: Batch,
    #[arg(long, value_delimiter = ',', default_value = "wpf,pf,rr")]
    schedulers: Vec<SchedulerKind>,
    #[arg(long = "speed-ratios", value_delimiter = ',', default_value = "1,2,4,8")]
    speed_ratios: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    aps: usize,
    /// Gate reaching time in hours.
    #[arg(long, default_value_t = 1.0)]
    grt: f64,
    /// Overrides the mobility mode of the config.
    #[arg(long)]
    mobility: Option<MobilityMode>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid(fields) => CliError::Config(
                fields
                    .iter()
                    .map(|f| format!("config error: {f}"))
                    .collect::<Vec<_>>()
                    .join("\n"),
            ),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn load(path: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    let Some(path) = path else {
        return Ok(ScenarioConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(ScenarioConfig::from_toml_str(&text)?)
}

fn base_config(common: &Common) -> Result<ScenarioConfig, CliError> {
    let mut cfg = load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.rng_seed = seed;
    }
    // Surface problems in the base file before expanding any grid.
    cfg.clone().validate()?;
    Ok(cfg)
}

fn run_one(args: RunArgs) -> Result<(), CliError> {
    let cfg = base_config(&args.common)?.validate()?;
    let workload = match &args.workload {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
            let w = traffic::read_workload_csv(file, cfg.num_ues)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            Some(w)
        }
        None => None,
    };
    let out = engine::run_with(
        &cfg,
        workload,
        RunOptions {
            record_trace: args.trace,
        },
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let dir = &args.common.out;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let reports = std::slice::from_ref(&out.report);
    write_atomic(&dir.join("results.csv"), |w| {
        metrics::write_results_csv(w, reports, &[])
    })?;
    write_atomic(&dir.join("events.csv"), |w| out.write_events_csv(w))?;
    write_atomic(&dir.join("workload.csv"), |w| {
        traffic::write_workload_csv(w, &out.workload)
    })?;
    if let Some(trace) = &out.trace {
        write_atomic(&dir.join("positions.csv"), |w| trace.write_positions_csv(w))?;
        write_atomic(&dir.join("links.csv"), |w| trace.write_links_csv(w))?;
        write_atomic(&dir.join("decisions.csv"), |w| {
            trace.write_decisions_csv(w, cfg.scheduler)
        })?;
    }
    let mut manifest = Manifest::new("run", &cfg, vec![cfg.rng_seed]);
    if let Some(path) = &args.workload {
        manifest.note(format!("workload replayed from {}", path.display()));
    }
    manifest.write(dir)?;

    let r = &out.report;
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "{} aps={} grt={} s seed={}: gofe {} f_alloc {} f_byte {} energy {} ({} of {} bytes via gate)",
        r.scheduler,
        r.num_aps,
        r.grt_s,
        r.seed,
        show(r.gofe),
        show(r.f_alloc),
        show(r.f_byte),
        show(r.norm_energy),
        r.bytes_via_gate,
        r.total_generated_bytes
    );
    Ok(())
}

/// Runs every (point, seed) pair on the worker pool and writes the results,
/// summary and manifest.
fn run_batch(
    name: &str,
    base: &ScenarioConfig,
    points: Vec<ScenarioConfig>,
    batch: &Batch,
    out: &Path,
    notes: Vec<String>,
) -> Result<(), CliError> {
    let seeds: Vec<u64> = (0..batch.seeds).map(|i| base.rng_seed.wrapping_add(i)).collect();
    let mut jobs: Vec<ValidatedConfig> = Vec::with_capacity(points.len() * seeds.len());
    for p in &points {
        for &seed in &seeds {
            jobs.push(
                ScenarioConfig {
                    rng_seed: seed,
                    ..p.clone()
                }
                .validate()?,
            );
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(batch.jobs)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let reports: Vec<MetricsReport> = pool.install(|| jobs.par_iter().map(|cfg| engine::run(cfg).report).collect());
    let aggregates = metrics::summarize(&reports);

    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_atomic(&out.join("results.csv"), |w| {
        metrics::write_results_csv(w, &reports, &aggregates)
    })?;
    write_atomic(&out.join("summary.csv"), |w| metrics::write_summary_csv(w, &aggregates))?;
    let validated = base.clone().validate()?;
    let mut manifest = Manifest::new(name, &validated, seeds);
    for n in notes {
        manifest.note(n);
    }
    manifest.write(out)?;

    for a in &aggregates {
        let m = |s: Option<metrics::Stats>| s.map_or_else(|| "n/a".to_string(), |s| format!("{:.4}", s.mean));
        println!(
            "{} aps={} grt={} s ratio={}: gofe {} f_alloc {} f_byte {} energy {} (n={})",
            a.point.scheduler,
            a.point.num_aps,
            a.point.grt_s,
            a.point.speed_ratio,
            m(a.gofe),
            m(a.f_alloc),
            m(a.f_byte),
            m(a.norm_energy),
            a.runs
        );
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let base = base_config(&args.common)?;
    let mut points = Vec::new();
    for &aps in &args.aps {
        for &grt_h in &args.grt {
            points.push(ScenarioConfig {
                num_aps: aps,
                grt_s: grt_h * 3600.0,
                ..base.clone()
            });
        }
    }
    let notes = vec![format!(
        "grid: num_aps in {:?} x grt_s in {:?}; every other field as in the config below",
        args.aps,
        args.grt.iter().map(|h| h * 3600.0).collect::<Vec<_>>()
    )];
    run_batch("sweep", &base, points, &args.batch, &args.common.out, notes)
}

fn fairness(args: FairnessArgs) -> Result<(), CliError> {
    let mut base = base_config(&args.common)?;
    base.num_aps = args.aps;
    base.grt_s = args.grt * 3600.0;
    if let Some(mode) = args.mobility {
        base.mobility.mode = mode;
    }
    let mut points = Vec::new();
    for &scheduler in &args.schedulers {
        for &ratio in &args.speed_ratios {
            let mut cfg = ScenarioConfig {
                scheduler,
                ..base.clone()
            };
            cfg.mobility.speed_ratio = ratio;
            points.push(cfg);
        }
    }
    let notes = vec![format!(
        "grid: scheduler in {:?} x mobility.speed_ratio in {:?}; every other field as in the config below",
        args.schedulers.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        args.speed_ratios
    )];
    run_batch("fairness", &base, points, &args.batch, &args.common.out, notes)
}

fn validate(path: &Path) -> Result<(), CliError> {
    let cfg = load(Some(path))?.validate()?;
    print!("{}", cfg.to_toml_string()?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run_one(a),
        Command::Sweep(a) => sweep(a),
        Command::Fairness(a) => fairness(a),
        Command::Validate { config } => validate(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
