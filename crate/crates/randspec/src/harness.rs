//! Experiment orchestration: generate (or ingest) a scan sequence, run
//! every estimator on it, track control points, detect stabilization,
//! and quantify the comparison.

use std::path::Path;

use thiserror::Error;

use crate::estimator::{
    naive_mean_baseline, randomized_least_squares, run_estimation, ConvergenceTrace,
    EstimationConfig, EstimatorError, EstimatorState, InitialGuess, IntensityStats, ScanRecord,
    VariancePolicy,
};
use crate::io::{self, IoError};
use crate::spectrum::{
    DisturbanceModel, DosModel, EnergyGrid, IntensityModel, NoiseProfile, ScanGenerator,
    SpectrumError,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("an experiment needs at least one scan")]
    NoScans,
    #[error("stabilization window must be at least 2, got {window}")]
    WindowTooSmall { window: usize },
    #[error("stabilization tolerance must be strictly positive and finite, got {value}")]
    InvalidRelTol { value: f64 },
    #[error("trace has {len} iterations, shorter than the stabilization window {window}")]
    TraceTooShort { len: usize, window: usize },
}

/// Number of evenly spaced control points used when none are configured.
pub const DEFAULT_CONTROL_POINTS: usize = 12;

/// Relative deviation between a declared intensity mean and the empirical
/// mean of a scan file above which ingestion records a warning.
pub const DECLARED_MEAN_WARN_FRAC: f64 = 0.2;

/// Full description of one experiment. Deterministic: the same config
/// (seed included) reproduces every byte of every output.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n_scans: u64,
    pub grid: EnergyGrid,
    pub dos: DosModel,
    pub intensity: IntensityModel,
    pub noise: NoiseProfile,
    pub disturbance: DisturbanceModel,
    /// Energies to track; `None` picks [`DEFAULT_CONTROL_POINTS`] bins
    /// evenly spaced over the grid. Values snap to the nearest bin.
    pub control_points_ev: Option<Vec<f64>>,
    pub seed: u64,
    pub initial_guess: InitialGuess,
    pub variance_policy: VariancePolicy,
    pub stabilization_rel_tol: f64,
    pub stabilization_window: usize,
}

impl ExperimentConfig {
    /// Resolves the configured control points to grid bins.
    pub fn control_bins(&self) -> Result<Vec<usize>, HarnessError> {
        resolve_control_bins(&self.grid, self.control_points_ev.as_deref())
    }
}

/// Snaps the requested control-point energies to grid bins, or picks
/// [`DEFAULT_CONTROL_POINTS`] evenly spaced bins when none are given.
pub fn resolve_control_bins(
    grid: &EnergyGrid,
    control_points_ev: Option<&[f64]>,
) -> Result<Vec<usize>, HarnessError> {
    match control_points_ev {
        Some(energies) => energies
            .iter()
            .map(|&e| grid.nearest_bin(e).map_err(HarnessError::from))
            .collect(),
        None => {
            let last = grid.len() - 1;
            Ok((0..DEFAULT_CONTROL_POINTS)
                .map(|k| {
                    (k as f64 * last as f64 / (DEFAULT_CONTROL_POINTS - 1) as f64).round() as usize
                })
                .collect())
        }
    }
}

/// Error of one estimate against the ground truth, split by the noise
/// window. An empty partition reports an RMSE of zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorMetrics {
    pub rmse_in_window: f64,
    pub rmse_out_window: f64,
    pub max_abs_error: f64,
}

fn metrics(
    estimate: &[f64],
    reference: &[f64],
    window: Option<(usize, usize)>,
) -> EstimatorMetrics {
    let mut sq_in = 0.0;
    let mut n_in = 0usize;
    let mut sq_out = 0.0;
    let mut n_out = 0usize;
    let mut max_abs = 0.0f64;
    for (bin, (&est, &truth)) in estimate.iter().zip(reference).enumerate() {
        let err = est - truth;
        max_abs = max_abs.max(err.abs());
        let in_window = window.is_some_and(|(lo, hi)| bin >= lo && bin <= hi);
        if in_window {
            sq_in += err * err;
            n_in += 1;
        } else {
            sq_out += err * err;
            n_out += 1;
        }
    }
    let rmse = |sq: f64, n: usize| if n == 0 { 0.0 } else { (sq / n as f64).sqrt() };
    EstimatorMetrics {
        rmse_in_window: rmse(sq_in, n_in),
        rmse_out_window: rmse(sq_out, n_out),
        max_abs_error: max_abs,
    }
}

/// Side-by-side error metrics for the three estimators plus the
/// experiment's bookkeeping counters.
///
/// `rls` is `None` when the intensity draw was degenerate (all
/// intensities equal, as with a single scan) and the closed-form solve
/// had no denominator to divide by.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub spsa: EstimatorMetrics,
    pub rls: Option<EstimatorMetrics>,
    pub naive_mean: EstimatorMetrics,
    pub stabilization_iteration: Option<u64>,
    pub theta_clamp_events: u64,
    pub window_lo_ev: f64,
    pub window_hi_ev: f64,
    pub in_window_bins: usize,
    pub out_window_bins: usize,
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    /// Human-readable rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "noise window: {:.3}-{:.3} eV ({} bins in, {} out)\n",
            self.window_lo_ev, self.window_hi_ev, self.in_window_bins, self.out_window_bins
        ));
        out.push_str("estimator    rmse_in_window  rmse_out_window  max_abs_error\n");
        for (name, m) in [
            ("spsa", Some(&self.spsa)),
            ("rls", self.rls.as_ref()),
            ("naive_mean", Some(&self.naive_mean)),
        ] {
            match m {
                Some(m) => out.push_str(&format!(
                    "{name:<12} {:>15.6e} {:>16.6e} {:>14.6e}\n",
                    m.rmse_in_window, m.rmse_out_window, m.max_abs_error
                )),
                None => out.push_str(&format!("{name:<12} (degenerate intensity draw)\n")),
            }
        }
        let ratio = if self.spsa.rmse_in_window > 0.0 {
            self.naive_mean.rmse_in_window / self.spsa.rmse_in_window
        } else {
            f64::INFINITY
        };
        out.push_str(&format!(
            "naive/spsa in-window rmse ratio: {ratio:.3}\n"
        ));
        match self.stabilization_iteration {
            Some(n) => out.push_str(&format!("stabilized at iteration {n}\n")),
            None => out.push_str("stabilized at iteration none\n"),
        }
        out.push_str(&format!("theta clamp events: {}\n", self.theta_clamp_events));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }

    /// Machine-readable key/value rendering; byte-stable for identical
    /// reports.
    pub fn to_machine_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("randspec-report v1\n");
        out.push_str("estimator,rmse_in_window,rmse_out_window,max_abs_error\n");
        for (name, m) in [
            ("spsa", Some(&self.spsa)),
            ("rls", self.rls.as_ref()),
            ("naive_mean", Some(&self.naive_mean)),
        ] {
            match m {
                Some(m) => out.push_str(&format!(
                    "{name},{},{},{}\n",
                    m.rmse_in_window, m.rmse_out_window, m.max_abs_error
                )),
                None => out.push_str(&format!("{name},degenerate,degenerate,degenerate\n")),
            }
        }
        match self.stabilization_iteration {
            Some(n) => out.push_str(&format!("stabilization_iteration,{n}\n")),
            None => out.push_str("stabilization_iteration,none\n"),
        }
        out.push_str(&format!("theta_clamp_events,{}\n", self.theta_clamp_events));
        out.push_str(&format!(
            "window_ev,{},{}\n",
            self.window_lo_ev, self.window_hi_ev
        ));
        for w in &self.warnings {
            out.push_str(&format!("warning,{w}\n"));
        }
        out
    }
}

/// Final spectra of the three estimators. `rls` is `None` on a
/// degenerate intensity draw.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpectra {
    pub spsa: Vec<f64>,
    pub rls: Option<Vec<f64>>,
    pub naive_mean: Vec<f64>,
}

/// Everything one experiment produces.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Ground truth per bin.
    pub reference: Vec<f64>,
    /// Deterministic noise profile per bin.
    pub noise_profile: Vec<f64>,
    pub spectra: EstimatorSpectra,
    pub final_state: EstimatorState,
    pub trace: ConvergenceTrace,
    pub control_energies_ev: Vec<f64>,
    pub report: ComparisonReport,
    /// The first generated scan, kept for the overlay plot.
    pub example_scan: ScanRecord,
    /// The mean intensity the estimators used.
    pub mean_intensity: f64,
}

/// Runs the full experiment: one scan sequence feeds all three
/// estimators, the trace records the configured control points, and the
/// report quantifies the comparison.
///
/// Under [`VariancePolicy::RunningEmpirical`] the intensity statistics
/// are estimated from the generated sequence in a first pass and then
/// held fixed while the recursion folds the scans; with
/// [`VariancePolicy::FixedKnown`] the intensity model's mean and
/// closed-form dispersion are used directly.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    if config.n_scans == 0 {
        return Err(HarnessError::NoScans);
    }
    let generator = ScanGenerator::new(
        &config.dos,
        &config.grid,
        config.intensity.clone(),
        &config.noise,
        config.disturbance,
        config.seed,
    );
    let reference = generator.theta_bar().to_vec();
    let noise_profile = generator.noise_profile().to_vec();

    let simulated = generator.scans(config.n_scans);
    let theta_clamp_events: u64 = simulated.iter().map(|s| s.clamped_bins).sum();
    let records: Vec<ScanRecord> = simulated.into_iter().map(|s| s.record).collect();

    let stats = match config.variance_policy {
        VariancePolicy::FixedKnown => IntensityStats::fixed_known(
            config.intensity.mean(),
            config.intensity.implied_dispersion(),
        )?,
        VariancePolicy::RunningEmpirical => {
            let mut running = IntensityStats::running_empirical();
            for record in &records {
                running.update(record.intensity())?;
            }
            let mean = running.mean_intensity()?;
            let dispersion = running.dispersion()?;
            IntensityStats::fixed_known(mean, dispersion)?
        }
    };
    let mean_intensity = stats.mean_intensity()?;

    let control_bins = config.control_bins()?;
    let control_energies_ev = control_bins
        .iter()
        .map(|&b| config.grid.energy_at(b))
        .collect();

    let estimation = EstimationConfig {
        stats: stats.clone(),
        initial_guess: config.initial_guess.clone(),
        control_bins,
    };
    let (final_state, trace) = run_estimation(&records, &estimation)?;
    let rls = match randomized_least_squares(&records) {
        Ok(estimate) => Some(estimate),
        Err(EstimatorError::DegenerateIntensityDraw) => None,
        Err(other) => return Err(other.into()),
    };
    let naive = naive_mean_baseline(&records, &stats)?;

    let stabilization_iteration = match stabilization_check(
        &trace,
        config.stabilization_rel_tol,
        config.stabilization_window,
    ) {
        Ok(found) => found,
        // a sequence shorter than the window simply never stabilizes
        Err(HarnessError::TraceTooShort { .. }) => None,
        Err(other) => return Err(other),
    };

    let report = metrics_report(
        final_state.theta_hat(),
        rls.as_deref(),
        &naive,
        &reference,
        &config.noise,
        &config.grid,
        stabilization_iteration,
        theta_clamp_events,
    );

    let example_scan = records.into_iter().next().expect("n_scans >= 1");
    Ok(ExperimentResult {
        reference,
        noise_profile,
        spectra: EstimatorSpectra {
            spsa: final_state.theta_hat().to_vec(),
            rls,
            naive_mean: naive,
        },
        final_state,
        trace,
        control_energies_ev,
        report,
        example_scan,
        mean_intensity,
    })
}

/// Assembles the comparison report from already-computed spectra.
#[allow(clippy::too_many_arguments)]
pub fn metrics_report(
    spsa: &[f64],
    rls: Option<&[f64]>,
    naive_mean: &[f64],
    reference: &[f64],
    noise: &NoiseProfile,
    grid: &EnergyGrid,
    stabilization_iteration: Option<u64>,
    theta_clamp_events: u64,
) -> ComparisonReport {
    let window = noise.window_bins(grid);
    let (in_bins, out_bins) = match window {
        Some((lo, hi)) => (hi - lo + 1, grid.len() - (hi - lo + 1)),
        None => (0, grid.len()),
    };
    let (window_lo_ev, window_hi_ev) = noise.window();
    ComparisonReport {
        spsa: metrics(spsa, reference, window),
        rls: rls.map(|estimate| metrics(estimate, reference, window)),
        naive_mean: metrics(naive_mean, reference, window),
        stabilization_iteration,
        theta_clamp_events,
        window_lo_ev,
        window_hi_ev,
        in_window_bins: in_bins,
        out_window_bins: out_bins,
        warnings: Vec::new(),
    }
}

/// Smallest iteration `n` at which every control point's trailing
/// `window` iterations changed by less than `rel_tol` between consecutive
/// steps, or `None` when the trace never settles.
///
/// The relative change from `prev` to `cur` is `|cur − prev| / |prev|`,
/// with an exact zero difference counting as no change even at
/// `prev = 0`, and any move away from an exact zero counting as
/// unstable.
pub fn stabilization_check(
    trace: &ConvergenceTrace,
    rel_tol: f64,
    window: usize,
) -> Result<Option<u64>, HarnessError> {
    if window < 2 {
        return Err(HarnessError::WindowTooSmall { window });
    }
    if !rel_tol.is_finite() || rel_tol <= 0.0 {
        return Err(HarnessError::InvalidRelTol { value: rel_tol });
    }
    let len = trace.len();
    if len < window {
        return Err(HarnessError::TraceTooShort { len, window });
    }
    'candidate: for n in window..=len {
        for cp in 0..trace.control_bins().len() {
            let series = trace.series(cp);
            // consecutive pairs inside iterations (n-window+1)..=n,
            // i.e. series indices (n-window)..(n-1)
            for i in (n - window + 1)..n {
                let prev = series[i - 1];
                let cur = series[i];
                let diff = (cur - prev).abs();
                let rel = if diff == 0.0 { 0.0 } else { diff / prev.abs() };
                if !(rel < rel_tol) {
                    continue 'candidate;
                }
            }
        }
        return Ok(Some(n as u64));
    }
    Ok(None)
}

/// A validated external scan sequence plus the intensity statistics to
/// run it with.
#[derive(Debug)]
pub struct IngestResult {
    pub grid: EnergyGrid,
    pub scans: Vec<ScanRecord>,
    pub stats: IntensityStats,
    pub warnings: Vec<String>,
}

/// Reads a scan file and prepares it for estimation.
///
/// When the header declares the intensity mean and dispersion those are
/// used as known values; a declared mean more than
/// [`DECLARED_MEAN_WARN_FRAC`] away from the file's empirical mean is
/// flagged with a warning. Without declared values both are estimated
/// from the file by the streaming accumulator and then held fixed.
pub fn ingest_external_scans(path: &Path) -> Result<IngestResult, HarnessError> {
    let file = io::read_scans(path)?;
    let mut running = IntensityStats::running_empirical();
    for record in &file.records {
        running.update(record.intensity())?;
    }
    let mut warnings = Vec::new();
    let stats = match (file.declared_mean, file.declared_dispersion) {
        (Some(mean), Some(dispersion)) => {
            if let Some(empirical) = running.empirical_mean() {
                if (empirical - mean).abs() > DECLARED_MEAN_WARN_FRAC * mean.abs() {
                    warnings.push(format!(
                        "declared mean intensity {mean} differs from the empirical mean \
                         {empirical:.6} of {} scans by more than {:.0}%",
                        file.records.len(),
                        DECLARED_MEAN_WARN_FRAC * 100.0
                    ));
                }
            }
            IntensityStats::fixed_known(mean, dispersion)?
        }
        _ => {
            let mean = running.mean_intensity()?;
            let dispersion = running.dispersion()?;
            IntensityStats::fixed_known(mean, dispersion)?
        }
    };
    Ok(IngestResult {
        grid: file.grid,
        scans: file.records,
        stats,
        warnings,
    })
}
