//! Filtering systematic noise with non-zero mean out of sequences of
//! randomized-intensity measurements.
//!
//! Plain scan averaging cannot remove an additive contamination whose
//! mean is not zero, no matter how many scans are taken. When each scan
//! is excited at a randomly drawn intensity `I_n` around a known mean,
//! the per-bin measurement is a linear regression `j_n = I_n·θ_n + N`,
//! and multiplying the residual by the zero-mean perturbation
//! `Δ_n = I_n − Ī` decorrelates the contamination. The recursive
//! estimator in [`estimator`] exploits this to recover the mean
//! parameter; a closed-form randomized least-squares solve and the naive
//! scan average ship alongside it for comparison.
//!
//! The crate also contains a synthetic photoemission-spectrum simulator
//! ([`spectrum`]), an experiment harness with convergence diagnostics
//! ([`harness`]), plain-text file formats ([`io`]), a strict TOML config
//! schema ([`config`]), and a small CLI ([`cli`], binary `randspec`).
//!
//! # Quick start
//!
//! ```
//! use randspec::{run_experiment, Config};
//!
//! let experiment = Config::default().to_experiment(Some(42))?;
//! let result = run_experiment(&experiment)?;
//! println!("{}", result.report.to_text());
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! - **`simulate_scans`** — generate a synthetic scan sequence and write
//!   it as a scan file.
//! - **`estimate_spectrum`** — fold the recursion over a scan sequence
//!   and compare the estimate with the ground truth.
//! - **`compare_estimators`** — run all three estimators on one sequence
//!   and print the comparison report.
//! - **`convergence_trace`** — track control points from a deliberately
//!   bad initial guess and watch the stabilization diagnostics.
//! - **`ingest_roundtrip`** — write scans to disk, ingest them back, and
//!   inspect the recovered intensity statistics.
//!
//! ```bash
//! cargo run -p randspec --example simulate_scans
//! cargo run -p randspec --example estimate_spectrum
//! cargo run -p randspec --example compare_estimators
//! cargo run -p randspec --example convergence_trace
//! cargo run -p randspec --example ingest_roundtrip
//! ```
//!
//! # Determinism
//!
//! Everything is reproducible: scan `k` draws from a ChaCha8 stream
//! seeded by a SplitMix64 hash of `(base_seed, k)`, estimation is a pure
//! fold, and the file writers are deterministic functions of their
//! inputs. Identical config and seed give byte-identical outputs.

pub mod cli;
pub mod config;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod spectrum;

pub use config::{Config, ConfigError};
pub use estimator::{
    naive_mean_baseline, randomized_least_squares, run_estimation, ConvergenceTrace,
    EstimationConfig, EstimatorError, EstimatorState, InitialGuess, IntensityStats, ScanRecord,
    VariancePolicy,
};
pub use harness::{
    ingest_external_scans, run_experiment, stabilization_check, ComparisonReport,
    EstimatorMetrics, ExperimentConfig, ExperimentResult, HarnessError, IngestResult,
};
pub use spectrum::{
    DisturbanceModel, DosModel, EnergyGrid, IntensityDistribution, IntensityModel, NoiseMode,
    NoiseProfile, NoiseShape, Peak, PeakShape, ScanGenerator, SimulatedScan, SpectrumError,
};
