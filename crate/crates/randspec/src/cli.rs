//! Command-line front end: `simulate`, `estimate`, and `compare`
//! subcommands over one TOML config schema.
//!
//! Exit codes: 0 on success, 1 on runtime or data errors (unreadable
//! scan files, inconsistent grids, estimation failures), 2 on usage and
//! config errors (bad flags, malformed config, missing seed). The config
//! path may come from the `RANDSPEC_CONFIG` environment variable; the
//! `--config` flag overrides it. No command mutates its inputs.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::estimator::{
    naive_mean_baseline, randomized_least_squares, run_estimation, EstimationConfig,
    EstimatorError,
};
use crate::harness::{
    ingest_external_scans, metrics_report, resolve_control_bins, stabilization_check,
    HarnessError, IngestResult,
};
use crate::io::{self, IoError, OverlayFile, ScanFile, TraceFile};
use crate::spectrum::{EnergyGrid, ScanGenerator};

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scan file grid ({found}) does not match the config grid ({expected})")]
    GridMismatch { expected: String, found: String },
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "randspec",
    version,
    about = "Filter non-zero-mean systematic noise out of randomized-intensity scan sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scan sequence and write it to a scan file.
    Simulate(SimulateArgs),
    /// Run the estimator over a scan file; write the spectra overlay and
    /// the convergence trace.
    Estimate(EstimateArgs),
    /// Run all estimators over a scan file and report the comparison.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Experiment config (TOML). Falls back to $RANDSPEC_CONFIG.
    #[arg(long, env = "RANDSPEC_CONFIG", value_name = "PATH")]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output scan file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Seed override; defaults to experiment.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Input scan file.
    #[arg(long, value_name = "PATH")]
    scans: PathBuf,
    /// Prefix for the output files (<prefix>_overlay.csv,
    /// <prefix>_trace.csv).
    #[arg(long, value_name = "PREFIX")]
    out_prefix: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Input scan file.
    #[arg(long, value_name = "PATH")]
    scans: PathBuf,
    /// Also write the machine-readable report here.
    #[arg(long, value_name = "PATH")]
    report_out: Option<PathBuf>,
}

/// Parses the command line and runs it; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help/--version print to stdout and exit 0; genuine usage
            // errors go to stderr and exit 2
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            code_of(&err)
        }
    }
}

fn code_of(err: &CliError) -> i32 {
    err.exit_code()
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = Config::load(&args.config.config)?;
    let experiment = config.to_experiment(args.seed)?;
    let generator = ScanGenerator::new(
        &experiment.dos,
        &experiment.grid,
        experiment.intensity.clone(),
        &experiment.noise,
        experiment.disturbance,
        experiment.seed,
    );
    let records = generator
        .scans(experiment.n_scans)
        .into_iter()
        .map(|s| s.record)
        .collect();
    // declare the known statistics in the header under the fixed policy
    let (declared_mean, declared_dispersion) = match experiment.variance_policy {
        crate::estimator::VariancePolicy::FixedKnown => (
            Some(experiment.intensity.mean()),
            Some(experiment.intensity.implied_dispersion()),
        ),
        crate::estimator::VariancePolicy::RunningEmpirical => (None, None),
    };
    let file = ScanFile {
        grid: experiment.grid.clone(),
        declared_mean,
        declared_dispersion,
        records,
    };
    io::write_scans(&args.out, &file)?;
    println!(
        "wrote {} scans over {} bins to {}",
        experiment.n_scans,
        experiment.grid.len(),
        args.out.display()
    );
    Ok(())
}

/// Loads config + scans and checks that the two grids agree.
fn load_inputs(config_path: &Path, scans_path: &Path) -> Result<(Config, IngestResult), CliError> {
    let config = Config::load(config_path)?;
    let ingested = ingest_external_scans(scans_path)?;
    let grid = config.energy_grid()?;
    if !grids_match(&grid, &ingested.grid) {
        return Err(CliError::GridMismatch {
            expected: grid_desc(&grid),
            found: grid_desc(&ingested.grid),
        });
    }
    Ok((config, ingested))
}

fn grids_match(a: &EnergyGrid, b: &EnergyGrid) -> bool {
    (a.start_ev() - b.start_ev()).abs() < 1e-9
        && (a.stop_ev() - b.stop_ev()).abs() < 1e-9
        && (a.step_ev() - b.step_ev()).abs() < 1e-12
}

fn grid_desc(grid: &EnergyGrid) -> String {
    format!(
        "{}..{} eV step {}",
        grid.start_ev(),
        grid.stop_ev(),
        grid.step_ev()
    )
}

fn control_bins(config: &Config, grid: &EnergyGrid) -> Result<Vec<usize>, CliError> {
    Ok(resolve_control_bins(
        grid,
        config.experiment.control_points_ev.as_deref(),
    )?)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Write {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let (config, ingested) = load_inputs(&args.config.config, &args.scans)?;
    let grid = ingested.grid.clone();
    let bins = control_bins(&config, &grid)?;

    let estimation = EstimationConfig {
        stats: ingested.stats.clone(),
        initial_guess: config.initial_guess(),
        control_bins: bins.clone(),
    };
    let (state, trace) = run_estimation(&ingested.scans, &estimation)?;

    let reference = config.dos_model()?.eval_theta_bar(&grid);
    let noise_profile = config.noise_profile()?.evaluate(&grid);
    let mean_intensity = ingested.stats.mean_intensity()?;

    let overlay = OverlayFile {
        energies_ev: grid.energies(),
        reference: reference.iter().map(|&t| t * mean_intensity).collect(),
        noisy_scan: ingested.scans[0].photocurrent().to_vec(),
        spsa_estimate: state
            .theta_hat()
            .iter()
            .map(|&t| t * mean_intensity)
            .collect(),
        noise_profile,
    };
    let trace_file = TraceFile {
        energies_ev: bins.iter().map(|&b| grid.energy_at(b)).collect(),
        values: (0..bins.len()).map(|i| trace.series(i).to_vec()).collect(),
    };

    let mut overlay_path = args.out_prefix.as_os_str().to_owned();
    overlay_path.push("_overlay.csv");
    let overlay_path = PathBuf::from(overlay_path);
    let mut trace_path = args.out_prefix.as_os_str().to_owned();
    trace_path.push("_trace.csv");
    let trace_path = PathBuf::from(trace_path);

    if let Some(parent) = overlay_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Write {
                path: overlay_path.clone(),
                source,
            })?;
        }
    }
    io::write_overlay(&overlay_path, &overlay)?;
    io::write_trace(&trace_path, &trace_file)?;
    for warning in &ingested.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "wrote {} and {}",
        overlay_path.display(),
        trace_path.display()
    );
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let (config, ingested) = load_inputs(&args.config.config, &args.scans)?;
    let grid = ingested.grid.clone();
    let bins = control_bins(&config, &grid)?;

    let estimation = EstimationConfig {
        stats: ingested.stats.clone(),
        initial_guess: config.initial_guess(),
        control_bins: bins,
    };
    let (state, trace) = run_estimation(&ingested.scans, &estimation)?;
    let rls = match randomized_least_squares(&ingested.scans) {
        Ok(estimate) => Some(estimate),
        Err(EstimatorError::DegenerateIntensityDraw) => None,
        Err(other) => return Err(other.into()),
    };
    let naive = naive_mean_baseline(&ingested.scans, &ingested.stats)?;

    let reference = config.dos_model()?.eval_theta_bar(&grid);
    let noise = config.noise_profile()?;
    let stabilization = match stabilization_check(
        &trace,
        config.experiment.stabilization_rel_tol,
        config.experiment.stabilization_window,
    ) {
        Ok(found) => found,
        Err(HarnessError::TraceTooShort { .. }) => None,
        Err(other) => return Err(other.into()),
    };

    let mut report = metrics_report(
        state.theta_hat(),
        rls.as_deref(),
        &naive,
        &reference,
        &noise,
        &grid,
        stabilization,
        0,
    );
    report.warnings = ingested.warnings.clone();

    print!("{}", report.to_text());
    if let Some(path) = &args.report_out {
        write_file(path, &report.to_machine_csv())?;
    }
    Ok(())
}
