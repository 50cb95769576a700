//! Per-bin recursive estimation of the mean regression parameter from
//! scans with randomized excitation intensity.
//!
//! The measurement model per energy bin is `j_n = I_n·θ_n + N`, where the
//! intensity `I_n` is drawn around a known mean and `N` is an additive
//! disturbance that may have non-zero mean. Because the centered
//! perturbation `Δ_n = I_n − Ī` is zero-mean and independent of `N`,
//! multiplying the residual by `Δ_n` decorrelates the disturbance and the
//! recursion
//!
//! ```text
//! θ̂_n = θ̂_{n−1} − Δ_n / (σ²·n) · (I_n·θ̂_{n−1} − j_n),    θ̂_0 = 0
//! ```
//!
//! converges to the mean parameter even when plain scan averaging stays
//! biased. `σ²` is the dispersion of `Δ_n`; it is either known up front
//! ([`VariancePolicy::FixedKnown`]) or accumulated from the observed
//! intensities ([`VariancePolicy::RunningEmpirical`]).
//!
//! Two reference estimators ship alongside the recursion: a closed-form
//! randomized least-squares solve ([`randomized_least_squares`]) and the
//! plain scan average ([`naive_mean_baseline`]) whose bias the recursion
//! is designed to remove.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("grid length must be at least 1")]
    EmptyGrid,
    #[error("initial guess has {got} entries but the grid has {expected}")]
    GuessLengthMismatch { expected: usize, got: usize },
    #[error("initial guess entry {bin} is not finite")]
    NonFiniteGuess { bin: usize },
    #[error("scan {index} has {got} bins, expected {expected}")]
    ScanLengthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("intensity must be strictly positive and finite, got {value}")]
    InvalidIntensity { value: f64 },
    #[error("photocurrent must be non-negative and finite, got {value} at bin {bin}")]
    InvalidPhotocurrent { bin: usize, value: f64 },
    #[error("mean intensity must be strictly positive and finite, got {value}")]
    InvalidMeanIntensity { value: f64 },
    #[error("dispersion must be strictly positive and finite, got {value}")]
    NonPositiveDispersion { value: f64 },
    #[error("running intensity statistics need at least two samples before use")]
    StatsNotReady,
    #[error("scan sequence is empty")]
    EmptyScanSequence,
    #[error("degenerate intensity draw: the least-squares denominator vanishes")]
    DegenerateIntensityDraw,
    #[error("control bin {bin} is outside the grid (length {len})")]
    ControlBinOutOfRange { bin: usize, len: usize },
}

/// Where the estimator takes the intensity mean and dispersion from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariancePolicy {
    /// Mean and dispersion are known constants, supplied at construction.
    FixedKnown,
    /// Mean and dispersion are streaming estimates over the observed
    /// intensities. Each [`EstimatorState::spsa_step`] folds the scan's
    /// intensity into the statistics before using them, so the dispersion
    /// may vary from step to step. Stepping fails until at least two
    /// distinct intensities have been seen.
    RunningEmpirical,
}

/// Intensity statistics: the mean `Ī` the perturbation is centered on and
/// the dispersion `σ²` of the centered perturbation.
///
/// The running accumulator uses Welford updates and reports the population
/// variance (`m2 / count`), so two samples `[1, 3]` give dispersion `1.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityStats {
    policy: VariancePolicy,
    fixed_mean: f64,
    fixed_dispersion: f64,
    count: u64,
    running_mean: f64,
    m2: f64,
}

impl IntensityStats {
    pub fn fixed_known(mean_intensity: f64, dispersion: f64) -> Result<Self, EstimatorError> {
        if !mean_intensity.is_finite() || mean_intensity <= 0.0 {
            return Err(EstimatorError::InvalidMeanIntensity {
                value: mean_intensity,
            });
        }
        if !dispersion.is_finite() || dispersion <= 0.0 {
            return Err(EstimatorError::NonPositiveDispersion { value: dispersion });
        }
        Ok(Self {
            policy: VariancePolicy::FixedKnown,
            fixed_mean: mean_intensity,
            fixed_dispersion: dispersion,
            count: 0,
            running_mean: 0.0,
            m2: 0.0,
        })
    }

    pub fn running_empirical() -> Self {
        Self {
            policy: VariancePolicy::RunningEmpirical,
            fixed_mean: 0.0,
            fixed_dispersion: 0.0,
            count: 0,
            running_mean: 0.0,
            m2: 0.0,
        }
    }

    pub fn policy(&self) -> VariancePolicy {
        self.policy
    }

    /// Folds one observed intensity into the running statistics.
    pub fn update(&mut self, intensity: f64) -> Result<(), EstimatorError> {
        if !intensity.is_finite() || intensity <= 0.0 {
            return Err(EstimatorError::InvalidIntensity { value: intensity });
        }
        self.count += 1;
        let delta = intensity - self.running_mean;
        self.running_mean += delta / self.count as f64;
        self.m2 += delta * (intensity - self.running_mean);
        Ok(())
    }

    /// The mean the perturbation is centered on, per policy.
    pub fn mean_intensity(&self) -> Result<f64, EstimatorError> {
        match self.policy {
            VariancePolicy::FixedKnown => Ok(self.fixed_mean),
            VariancePolicy::RunningEmpirical => {
                if self.count < 2 {
                    Err(EstimatorError::StatsNotReady)
                } else {
                    Ok(self.running_mean)
                }
            }
        }
    }

    /// The dispersion `σ²` of the centered perturbation, per policy.
    ///
    /// Under [`VariancePolicy::RunningEmpirical`] this is strictly positive
    /// only once two *distinct* samples have been seen; a constant
    /// intensity stream keeps the dispersion at zero and the estimator
    /// refuses to step rather than divide by it.
    pub fn dispersion(&self) -> Result<f64, EstimatorError> {
        match self.policy {
            VariancePolicy::FixedKnown => Ok(self.fixed_dispersion),
            VariancePolicy::RunningEmpirical => {
                if self.count < 2 {
                    return Err(EstimatorError::StatsNotReady);
                }
                let dispersion = self.m2 / self.count as f64;
                if dispersion <= 0.0 {
                    return Err(EstimatorError::NonPositiveDispersion { value: dispersion });
                }
                Ok(dispersion)
            }
        }
    }

    pub fn sample_count(&self) -> u64 {
        self.count
    }

    /// Streaming mean of the intensities seen so far, regardless of policy.
    pub fn empirical_mean(&self) -> Option<f64> {
        (self.count >= 1).then_some(self.running_mean)
    }

    /// Streaming population variance of the intensities seen so far.
    pub fn empirical_dispersion(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / self.count as f64)
    }
}

/// One single-scan observation: the excitation intensity and the measured
/// photocurrent per energy bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRecord {
    intensity: f64,
    photocurrent: Vec<f64>,
}

impl ScanRecord {
    pub fn new(intensity: f64, photocurrent: Vec<f64>) -> Result<Self, EstimatorError> {
        if !intensity.is_finite() || intensity <= 0.0 {
            return Err(EstimatorError::InvalidIntensity { value: intensity });
        }
        for (bin, &j) in photocurrent.iter().enumerate() {
            if !j.is_finite() || j < 0.0 {
                return Err(EstimatorError::InvalidPhotocurrent { bin, value: j });
            }
        }
        Ok(Self {
            intensity,
            photocurrent,
        })
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn photocurrent(&self) -> &[f64] {
        &self.photocurrent
    }

    pub fn bins(&self) -> usize {
        self.photocurrent.len()
    }
}

/// Starting point for the recursion.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialGuess {
    /// All bins start at zero. This is the canonical choice.
    #[default]
    Zero,
    /// Every bin starts at the same value.
    Scalar(f64),
    /// Per-bin starting values; the length must match the grid.
    Vector(Vec<f64>),
}

/// Running estimate per energy bin together with the iteration counter and
/// the intensity statistics driving the gain.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    theta_hat: Vec<f64>,
    iteration: u64,
    stats: IntensityStats,
}

impl EstimatorState {
    /// Initializes the estimate. The default guess is all-zero; a scalar
    /// guess is broadcast over the grid.
    pub fn new(
        grid_len: usize,
        stats: IntensityStats,
        guess: InitialGuess,
    ) -> Result<Self, EstimatorError> {
        if grid_len == 0 {
            return Err(EstimatorError::EmptyGrid);
        }
        let theta_hat = match guess {
            InitialGuess::Zero => vec![0.0; grid_len],
            InitialGuess::Scalar(v) => {
                if !v.is_finite() {
                    return Err(EstimatorError::NonFiniteGuess { bin: 0 });
                }
                vec![v; grid_len]
            }
            InitialGuess::Vector(v) => {
                if v.len() != grid_len {
                    return Err(EstimatorError::GuessLengthMismatch {
                        expected: grid_len,
                        got: v.len(),
                    });
                }
                if let Some(bin) = v.iter().position(|x| !x.is_finite()) {
                    return Err(EstimatorError::NonFiniteGuess { bin });
                }
                v
            }
        };
        Ok(Self {
            theta_hat,
            iteration: 0,
            stats,
        })
    }

    pub fn theta_hat(&self) -> &[f64] {
        &self.theta_hat
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn stats(&self) -> &IntensityStats {
        &self.stats
    }

    /// One measurement update. Pure: returns the successor state and
    /// leaves `self` untouched.
    ///
    /// Each bin moves against its residual `I_n·θ̂ − j_n`, scaled by the
    /// centered perturbation `Δ_n = I_n − Ī` and the decaying gain
    /// `1/(σ²·n)`. A scan at exactly the mean intensity (`Δ_n = 0`) or
    /// with zero residual leaves the estimate unchanged. Bins never
    /// couple, so permuting bins of all inputs permutes the output.
    pub fn spsa_step(&self, scan: &ScanRecord) -> Result<Self, EstimatorError> {
        if scan.bins() != self.theta_hat.len() {
            return Err(EstimatorError::ScanLengthMismatch {
                index: self.iteration as usize + 1,
                expected: self.theta_hat.len(),
                got: scan.bins(),
            });
        }
        let mut stats = self.stats.clone();
        if stats.policy() == VariancePolicy::RunningEmpirical {
            stats.update(scan.intensity())?;
        }
        let mean = stats.mean_intensity()?;
        let dispersion = stats.dispersion()?;

        let n = (self.iteration + 1) as f64;
        let delta = scan.intensity() - mean;
        let gain = delta / (dispersion * n);
        let intensity = scan.intensity();
        let theta_hat = self
            .theta_hat
            .iter()
            .zip(scan.photocurrent())
            .map(|(&th, &j)| th - gain * (intensity * th - j))
            .collect();
        Ok(Self {
            theta_hat,
            iteration: self.iteration + 1,
            stats,
        })
    }
}

/// History of the estimate at selected control bins, one value per
/// iteration starting at `n = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    control_bins: Vec<usize>,
    values: Vec<Vec<f64>>,
}

impl ConvergenceTrace {
    fn new(control_bins: Vec<usize>) -> Self {
        let values = vec![Vec::new(); control_bins.len()];
        Self {
            control_bins,
            values,
        }
    }

    /// Test-only: assemble a trace directly from per-control-point series.
    #[cfg(test)]
    pub(crate) fn from_series(values: Vec<Vec<f64>>) -> Self {
        let control_bins = (0..values.len()).collect();
        Self {
            control_bins,
            values,
        }
    }

    fn record(&mut self, state: &EstimatorState) {
        for (series, &bin) in self.values.iter_mut().zip(&self.control_bins) {
            series.push(state.theta_hat[bin]);
        }
    }

    pub fn control_bins(&self) -> &[usize] {
        &self.control_bins
    }

    /// Number of recorded iterations.
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The estimate history at control point `idx`, indexed by iteration
    /// (entry `k` holds the value after iteration `k + 1`).
    pub fn series(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }
}

/// Settings for folding a scan sequence into a final estimate.
#[derive(Debug, Clone)]
pub struct EstimationConfig {
    pub stats: IntensityStats,
    pub initial_guess: InitialGuess,
    /// Bins whose history is recorded after every step.
    pub control_bins: Vec<usize>,
}

/// Folds the recursion over the scans in order and records the estimate
/// at the configured control bins after every step.
pub fn run_estimation(
    scans: &[ScanRecord],
    config: &EstimationConfig,
) -> Result<(EstimatorState, ConvergenceTrace), EstimatorError> {
    let first = scans.first().ok_or(EstimatorError::EmptyScanSequence)?;
    let grid_len = first.bins();
    for (i, scan) in scans.iter().enumerate() {
        if scan.bins() != grid_len {
            return Err(EstimatorError::ScanLengthMismatch {
                index: i + 1,
                expected: grid_len,
                got: scan.bins(),
            });
        }
    }
    for &bin in &config.control_bins {
        if bin >= grid_len {
            return Err(EstimatorError::ControlBinOutOfRange { bin, len: grid_len });
        }
    }

    let mut state = EstimatorState::new(grid_len, config.stats.clone(), config.initial_guess.clone())?;
    let mut trace = ConvergenceTrace::new(config.control_bins.clone());
    for scan in scans {
        state = state.spsa_step(scan)?;
        trace.record(&state);
    }
    Ok((state, trace))
}

/// Closed-form randomized least-squares estimate.
///
/// Per bin, `θ̃ = Σ Δ_n·j_n / Σ Δ_n·I_n`, with `Δ_n = I_n − Î` centered on
/// the *empirical* mean of the observed intensities. Centering on the
/// empirical mean makes `Σ Δ_n = 0`, so any disturbance that is constant
/// across scans cancels identically regardless of the draw. Fails when all
/// intensities coincide (the shared denominator vanishes).
pub fn randomized_least_squares(scans: &[ScanRecord]) -> Result<Vec<f64>, EstimatorError> {
    let first = scans.first().ok_or(EstimatorError::EmptyScanSequence)?;
    let grid_len = first.bins();
    let mut intensity_sum = 0.0;
    let mut scale = 0.0;
    for (i, scan) in scans.iter().enumerate() {
        if scan.bins() != grid_len {
            return Err(EstimatorError::ScanLengthMismatch {
                index: i + 1,
                expected: grid_len,
                got: scan.bins(),
            });
        }
        intensity_sum += scan.intensity();
        scale += scan.intensity() * scan.intensity();
    }
    let empirical_mean = intensity_sum / scans.len() as f64;

    let mut denominator = 0.0;
    let mut numerator = vec![0.0; grid_len];
    for scan in scans {
        let delta = scan.intensity() - empirical_mean;
        denominator += delta * scan.intensity();
        for (acc, &j) in numerator.iter_mut().zip(scan.photocurrent()) {
            *acc += delta * j;
        }
    }
    // The denominator equals the sum of squared centered intensities up to
    // rounding; a genuine draw keeps it well away from zero.
    if denominator.abs() <= 1e-14 * scale {
        return Err(EstimatorError::DegenerateIntensityDraw);
    }
    Ok(numerator.into_iter().map(|num| num / denominator).collect())
}

/// Plain scan average `mean(j_n)/Ī` per bin. Unbiased only when the
/// additive disturbance has zero mean; kept as the comparison baseline.
pub fn naive_mean_baseline(
    scans: &[ScanRecord],
    stats: &IntensityStats,
) -> Result<Vec<f64>, EstimatorError> {
    let first = scans.first().ok_or(EstimatorError::EmptyScanSequence)?;
    let grid_len = first.bins();
    let mean = stats.mean_intensity()?;
    let mut acc = vec![0.0; grid_len];
    for (i, scan) in scans.iter().enumerate() {
        if scan.bins() != grid_len {
            return Err(EstimatorError::ScanLengthMismatch {
                index: i + 1,
                expected: grid_len,
                got: scan.bins(),
            });
        }
        for (a, &j) in acc.iter_mut().zip(scan.photocurrent()) {
            *a += j;
        }
    }
    let norm = scans.len() as f64 * mean;
    Ok(acc.into_iter().map(|a| a / norm).collect())
}
