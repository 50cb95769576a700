//! Forward simulator: ground-truth spectra, randomized excitation
//! intensities, per-scan parameter disturbances, and the bounded
//! systematic-noise profile.
//!
//! A scan at intensity `I_n` observes `j(E) = I_n·θ_n(E) + N(E)` per
//! energy bin, where `θ_n = θ̄ + w_n` wobbles around the scaled density
//! of states `θ̄(E)` and `N` is a deterministic bounded contamination
//! confined to a sub-window of the grid. The intensity draw never sees
//! `N`, so the two are independent by construction.
//!
//! Scan generation is stateless: scan `k` draws from an RNG seeded by a
//! SplitMix64 hash of `(base_seed, k)`, so sequences are reproducible
//! bit-for-bit and scans may be generated in any order or in parallel.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::estimator::{EstimatorError, ScanRecord};

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("grid start {start} must lie below stop {stop}")]
    GridOrder { start: f64, stop: f64 },
    #[error("grid step must be strictly positive and finite, got {step}")]
    GridStep { step: f64 },
    #[error("grid values must be finite")]
    GridNotFinite,
    #[error("peak {index}: {field} must be strictly positive and finite")]
    InvalidPeak { index: usize, field: &'static str },
    #[error("background must be non-negative and finite, got {value}")]
    InvalidBackground { value: f64 },
    #[error("scale constant must be strictly positive and finite, got {value}")]
    InvalidScale { value: f64 },
    #[error("intensity mean must be strictly positive and finite, got {value}")]
    InvalidIntensityMean { value: f64 },
    #[error("half_width_frac must lie in (0, 1), got {value}")]
    InvalidHalfWidth { value: f64 },
    #[error("noise window [{lo}, {hi}] is not an ordered sub-range of the grid")]
    InvalidNoiseWindow { lo: f64, hi: f64 },
    #[error("noise amplitude must be non-negative and finite, got {value}")]
    InvalidNoiseAmplitude { value: f64 },
    #[error("pedestal_frac must lie in [0, 1], got {value}")]
    InvalidPedestal { value: f64 },
    #[error("jitter amplitude must lie in [0, 1], got {value}")]
    InvalidJitter { value: f64 },
    #[error("tabulated noise point {index} is invalid: {reason}")]
    InvalidTabulatedPoint { index: usize, reason: &'static str },
    #[error("tabulated noise shape needs at least one point")]
    EmptyTabulatedShape,
    #[error("sigma_w must be non-negative and finite, got {value}")]
    InvalidSigmaW { value: f64 },
    #[error("energy {energy} eV lies outside the grid range")]
    EnergyOutOfRange { energy: f64 },
    #[error(transparent)]
    Scan(#[from] EstimatorError),
}

/// Ordered kinetic-energy bins. Bin `i` sits at `start + i·step`; the bin
/// count is `round((stop − start)/step) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    start_ev: f64,
    stop_ev: f64,
    step_ev: f64,
    bins: usize,
}

impl EnergyGrid {
    pub fn new(start_ev: f64, stop_ev: f64, step_ev: f64) -> Result<Self, SpectrumError> {
        if !start_ev.is_finite() || !stop_ev.is_finite() {
            return Err(SpectrumError::GridNotFinite);
        }
        if !step_ev.is_finite() || step_ev <= 0.0 {
            return Err(SpectrumError::GridStep { step: step_ev });
        }
        if start_ev >= stop_ev {
            return Err(SpectrumError::GridOrder {
                start: start_ev,
                stop: stop_ev,
            });
        }
        let bins = ((stop_ev - start_ev) / step_ev).round() as usize + 1;
        Ok(Self {
            start_ev,
            stop_ev,
            step_ev,
            bins,
        })
    }

    pub fn len(&self) -> usize {
        self.bins
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start_ev(&self) -> f64 {
        self.start_ev
    }

    pub fn stop_ev(&self) -> f64 {
        self.stop_ev
    }

    pub fn step_ev(&self) -> f64 {
        self.step_ev
    }

    pub fn energy_at(&self, bin: usize) -> f64 {
        self.start_ev + bin as f64 * self.step_ev
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.energy_at(i)).collect()
    }

    /// Nearest bin to `energy`; the snap distance never exceeds half a
    /// step for in-range energies.
    pub fn nearest_bin(&self, energy: f64) -> Result<usize, SpectrumError> {
        let half = self.step_ev / 2.0;
        if !energy.is_finite()
            || energy < self.start_ev - half
            || energy > self.energy_at(self.bins - 1) + half
        {
            return Err(SpectrumError::EnergyOutOfRange { energy });
        }
        let idx = ((energy - self.start_ev) / self.step_ev).round() as usize;
        Ok(idx.min(self.bins - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakShape {
    Gaussian,
    Lorentzian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    pub center_ev: f64,
    pub width_ev: f64,
    pub amplitude: f64,
    pub shape: PeakShape,
}

impl Peak {
    fn evaluate(&self, energy: f64) -> f64 {
        let d = energy - self.center_ev;
        match self.shape {
            PeakShape::Gaussian => self.amplitude * (-0.5 * (d / self.width_ev).powi(2)).exp(),
            PeakShape::Lorentzian => {
                let w2 = self.width_ev * self.width_ev;
                self.amplitude * w2 / (d * d + w2)
            }
        }
    }
}

/// Scaled density-of-states model: a constant background plus peaks, all
/// multiplied by one overall scale. Its evaluation on a grid is the
/// ground-truth parameter the estimators are after.
#[derive(Debug, Clone, PartialEq)]
pub struct DosModel {
    peaks: Vec<Peak>,
    background: f64,
    scale_const: f64,
}

impl DosModel {
    pub fn new(peaks: Vec<Peak>, background: f64, scale_const: f64) -> Result<Self, SpectrumError> {
        for (index, p) in peaks.iter().enumerate() {
            if !p.center_ev.is_finite() {
                return Err(SpectrumError::InvalidPeak {
                    index,
                    field: "center_ev",
                });
            }
            if !p.width_ev.is_finite() || p.width_ev <= 0.0 {
                return Err(SpectrumError::InvalidPeak {
                    index,
                    field: "width_ev",
                });
            }
            if !p.amplitude.is_finite() || p.amplitude <= 0.0 {
                return Err(SpectrumError::InvalidPeak {
                    index,
                    field: "amplitude",
                });
            }
        }
        if !background.is_finite() || background < 0.0 {
            return Err(SpectrumError::InvalidBackground { value: background });
        }
        if !scale_const.is_finite() || scale_const <= 0.0 {
            return Err(SpectrumError::InvalidScale { value: scale_const });
        }
        Ok(Self {
            peaks,
            background,
            scale_const,
        })
    }

    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    pub fn scale_const(&self) -> f64 {
        self.scale_const
    }

    /// Ground-truth parameter per bin: `scale · (background + Σ peaks)`.
    /// Non-negative everywhere by construction.
    pub fn eval_theta_bar(&self, grid: &EnergyGrid) -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                let e = grid.energy_at(i);
                let dos: f64 =
                    self.background + self.peaks.iter().map(|p| p.evaluate(e)).sum::<f64>();
                self.scale_const * dos
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntensityDistribution {
    /// Uniform on `mean·(1 ± half_width_frac)`.
    Uniform,
    /// Normal with standard deviation `half_width/2`, rejection-truncated
    /// at `mean ± half_width` (a two-sigma cut).
    TruncatedGaussian,
}

/// Variance of a standard normal truncated at two sigma, as a fraction of
/// the squared half-width: `(1 − 2αφ(α)/(2Φ(α)−1)) / α²` at `α = 2`.
const TRUNCATED_GAUSSIAN_VARIANCE_FACTOR: f64 = 0.193_435_325_887_480_8;

/// Excitation-intensity model. Draws stay inside
/// `[mean·(1−half_width_frac), mean·(1+half_width_frac)]`, hence strictly
/// positive, and the dispersion of the centered draw is available in
/// closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel {
    mean: f64,
    half_width_frac: f64,
    distribution: IntensityDistribution,
}

impl IntensityModel {
    pub fn new(
        mean: f64,
        half_width_frac: f64,
        distribution: IntensityDistribution,
    ) -> Result<Self, SpectrumError> {
        if !mean.is_finite() || mean <= 0.0 {
            return Err(SpectrumError::InvalidIntensityMean { value: mean });
        }
        if !half_width_frac.is_finite() || half_width_frac <= 0.0 || half_width_frac >= 1.0 {
            return Err(SpectrumError::InvalidHalfWidth {
                value: half_width_frac,
            });
        }
        Ok(Self {
            mean,
            half_width_frac,
            distribution,
        })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn half_width_frac(&self) -> f64 {
        self.half_width_frac
    }

    pub fn distribution(&self) -> IntensityDistribution {
        self.distribution
    }

    /// Exact variance of the centered draw `I − Ī` for the configured
    /// distribution: `a²/3` for uniform on `±a`, and the two-sigma
    /// truncated-normal variance otherwise.
    pub fn implied_dispersion(&self) -> f64 {
        let half_width = self.mean * self.half_width_frac;
        match self.distribution {
            IntensityDistribution::Uniform => half_width * half_width / 3.0,
            IntensityDistribution::TruncatedGaussian => {
                TRUNCATED_GAUSSIAN_VARIANCE_FACTOR * half_width * half_width
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let half_width = self.mean * self.half_width_frac;
        match self.distribution {
            IntensityDistribution::Uniform => {
                rng.random_range(self.mean - half_width..=self.mean + half_width)
            }
            IntensityDistribution::TruncatedGaussian => {
                let normal = Normal::new(0.0, half_width / 2.0).expect("validated width");
                loop {
                    let x = normal.sample(rng);
                    if x.abs() <= half_width {
                        return self.mean + x;
                    }
                }
            }
        }
    }
}

/// How the systematic contamination varies from scan to scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    /// Identical in every scan.
    Deterministic,
    /// The profile is rescaled per scan by `1 + a·u`, `u ~ U(−1, 1)`,
    /// which jitters the level around the profile with zero mean while
    /// keeping it non-negative for `a ≤ 1`.
    PerScanJitter { amplitude: f64 },
}

/// Spatial shape of the contamination inside the window.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseShape {
    /// A raised-cosine bump on a flat pedestal:
    /// `amplitude·(p + (1−p)·cos²(π·(E−mid)/width))`. The pedestal keeps
    /// the contamination bounded away from zero on the whole window,
    /// matching a source that switches on abruptly at the window edges.
    Bump { amplitude: f64, pedestal_frac: f64 },
    /// Piecewise-linear interpolation through `(energy, value)` points;
    /// clamped to the boundary values beyond the outermost points.
    Tabulated { points: Vec<(f64, f64)> },
}

/// Bounded deterministic contamination, zero outside its window.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    window_lo_ev: f64,
    window_hi_ev: f64,
    shape: NoiseShape,
    mode: NoiseMode,
    enabled: bool,
}

impl NoiseProfile {
    pub fn new(
        window_lo_ev: f64,
        window_hi_ev: f64,
        shape: NoiseShape,
        mode: NoiseMode,
    ) -> Result<Self, SpectrumError> {
        if !window_lo_ev.is_finite() || !window_hi_ev.is_finite() || window_lo_ev >= window_hi_ev {
            return Err(SpectrumError::InvalidNoiseWindow {
                lo: window_lo_ev,
                hi: window_hi_ev,
            });
        }
        match &shape {
            NoiseShape::Bump {
                amplitude,
                pedestal_frac,
            } => {
                if !amplitude.is_finite() || *amplitude < 0.0 {
                    return Err(SpectrumError::InvalidNoiseAmplitude { value: *amplitude });
                }
                if !pedestal_frac.is_finite() || *pedestal_frac < 0.0 || *pedestal_frac > 1.0 {
                    return Err(SpectrumError::InvalidPedestal {
                        value: *pedestal_frac,
                    });
                }
            }
            NoiseShape::Tabulated { points } => {
                if points.is_empty() {
                    return Err(SpectrumError::EmptyTabulatedShape);
                }
                let mut prev = f64::NEG_INFINITY;
                for (index, &(e, v)) in points.iter().enumerate() {
                    if !e.is_finite() || !v.is_finite() {
                        return Err(SpectrumError::InvalidTabulatedPoint {
                            index,
                            reason: "not finite",
                        });
                    }
                    if v < 0.0 {
                        return Err(SpectrumError::InvalidTabulatedPoint {
                            index,
                            reason: "negative value",
                        });
                    }
                    if e <= prev {
                        return Err(SpectrumError::InvalidTabulatedPoint {
                            index,
                            reason: "energies must be strictly increasing",
                        });
                    }
                    prev = e;
                }
            }
        }
        if let NoiseMode::PerScanJitter { amplitude } = mode {
            if !amplitude.is_finite() || !(0.0..=1.0).contains(&amplitude) {
                return Err(SpectrumError::InvalidJitter { value: amplitude });
            }
        }
        Ok(Self {
            window_lo_ev,
            window_hi_ev,
            shape,
            mode,
            enabled: true,
        })
    }

    /// A profile that contributes nothing but still carries the window
    /// (reports keep partitioning the grid by it).
    pub fn disabled(window_lo_ev: f64, window_hi_ev: f64) -> Result<Self, SpectrumError> {
        let mut profile = Self::new(
            window_lo_ev,
            window_hi_ev,
            NoiseShape::Bump {
                amplitude: 0.0,
                pedestal_frac: 0.0,
            },
            NoiseMode::Deterministic,
        )?;
        profile.enabled = false;
        Ok(profile)
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    pub fn window(&self) -> (f64, f64) {
        (self.window_lo_ev, self.window_hi_ev)
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    /// Inclusive bin range covered by the window, or `None` when the
    /// window misses the grid entirely. Comparisons carry a small slack
    /// so bins landing exactly on a window edge count as inside.
    pub fn window_bins(&self, grid: &EnergyGrid) -> Option<(usize, usize)> {
        let slack = grid.step_ev() * 1e-9;
        let mut lo = None;
        let mut hi = None;
        for i in 0..grid.len() {
            let e = grid.energy_at(i);
            if e >= self.window_lo_ev - slack && e <= self.window_hi_ev + slack {
                if lo.is_none() {
                    lo = Some(i);
                }
                hi = Some(i);
            }
        }
        lo.zip(hi)
    }

    /// The deterministic profile evaluated on the grid: zero outside the
    /// window, the configured shape inside, all zeros when disabled.
    pub fn evaluate(&self, grid: &EnergyGrid) -> Vec<f64> {
        let mut values = vec![0.0; grid.len()];
        if !self.enabled {
            return values;
        }
        if let Some((lo, hi)) = self.window_bins(grid) {
            for (i, value) in values.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *value = self.shape_at(grid.energy_at(i));
            }
        }
        values
    }

    fn shape_at(&self, energy: f64) -> f64 {
        match &self.shape {
            NoiseShape::Bump {
                amplitude,
                pedestal_frac,
            } => {
                let mid = 0.5 * (self.window_lo_ev + self.window_hi_ev);
                let width = self.window_hi_ev - self.window_lo_ev;
                let c = (std::f64::consts::PI * (energy - mid) / width).cos();
                amplitude * (pedestal_frac + (1.0 - pedestal_frac) * c * c)
            }
            NoiseShape::Tabulated { points } => {
                if energy <= points[0].0 {
                    return points[0].1;
                }
                if energy >= points[points.len() - 1].0 {
                    return points[points.len() - 1].1;
                }
                let k = points.partition_point(|&(e, _)| e < energy);
                let (e0, v0) = points[k - 1];
                let (e1, v1) = points[k];
                v0 + (v1 - v0) * (energy - e0) / (e1 - e0)
            }
        }
    }

    /// Upper bound of the contamination over the window (before jitter).
    pub fn bound(&self) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        match &self.shape {
            NoiseShape::Bump { amplitude, .. } => *amplitude,
            NoiseShape::Tabulated { points } => {
                points.iter().map(|&(_, v)| v).fold(0.0, f64::max)
            }
        }
    }
}

/// Zero-mean per-scan disturbance of the parameter, `w_n ~ N(0, σ_w²)`
/// independently per bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceModel {
    sigma_w: f64,
}

impl DisturbanceModel {
    pub fn new(sigma_w: f64) -> Result<Self, SpectrumError> {
        if !sigma_w.is_finite() || sigma_w < 0.0 {
            return Err(SpectrumError::InvalidSigmaW { value: sigma_w });
        }
        Ok(Self { sigma_w })
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }
}

/// One generated scan plus bookkeeping: how many bins had their parameter
/// clamped at zero because the disturbance drove it negative.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedScan {
    pub record: ScanRecord,
    pub clamped_bins: u64,
}

/// SplitMix64 finalizer; gives well-spread per-scan seeds from
/// `(base, index)`.
fn scan_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Scan factory over a fixed set of models. Holds the ground truth and
/// the noise profile pre-evaluated on the grid.
///
/// Scan `k` (1-based, matching the estimator's iteration count) uses a
/// ChaCha8 stream seeded with `splitmix64(base_seed + k·0x9e3779b97f4a7c15)`
/// and draws, in order: the intensity, the jitter factor (only in jitter
/// mode), then one disturbance per bin (only when `sigma_w > 0`).
#[derive(Debug, Clone)]
pub struct ScanGenerator {
    theta_bar: Vec<f64>,
    noise: Vec<f64>,
    intensity: IntensityModel,
    jitter: Option<f64>,
    sigma_w: f64,
    base_seed: u64,
}

impl ScanGenerator {
    pub fn new(
        dos: &DosModel,
        grid: &EnergyGrid,
        intensity: IntensityModel,
        noise: &NoiseProfile,
        disturbance: DisturbanceModel,
        base_seed: u64,
    ) -> Self {
        let jitter = match noise.mode() {
            NoiseMode::PerScanJitter { amplitude } if noise.is_enabled() => Some(amplitude),
            _ => None,
        };
        Self {
            theta_bar: dos.eval_theta_bar(grid),
            noise: noise.evaluate(grid),
            intensity,
            jitter,
            sigma_w: disturbance.sigma_w(),
            base_seed,
        }
    }

    pub fn theta_bar(&self) -> &[f64] {
        &self.theta_bar
    }

    pub fn noise_profile(&self) -> &[f64] {
        &self.noise
    }

    /// Generates scan `index` (1-based). Fully determined by
    /// `(models, base_seed, index)`.
    pub fn scan(&self, index: u64) -> SimulatedScan {
        let mut rng = ChaCha8Rng::seed_from_u64(scan_seed(self.base_seed, index));
        let intensity = self.intensity.sample(&mut rng);
        let noise_factor = match self.jitter {
            Some(amplitude) => 1.0 + amplitude * rng.random_range(-1.0..=1.0),
            None => 1.0,
        };
        let mut clamped = 0u64;
        let mut photocurrent = Vec::with_capacity(self.theta_bar.len());
        if self.sigma_w > 0.0 {
            let normal = Normal::new(0.0, self.sigma_w).expect("validated sigma");
            for (&theta, &n) in self.theta_bar.iter().zip(&self.noise) {
                let mut theta_n = theta + normal.sample(&mut rng);
                if theta_n < 0.0 {
                    theta_n = 0.0;
                    clamped += 1;
                }
                photocurrent.push(intensity * theta_n + n * noise_factor);
            }
        } else {
            for (&theta, &n) in self.theta_bar.iter().zip(&self.noise) {
                photocurrent.push(intensity * theta + n * noise_factor);
            }
        }
        SimulatedScan {
            record: ScanRecord::new(intensity, photocurrent)
                .expect("generated scans satisfy the record invariants"),
            clamped_bins: clamped,
        }
    }

    /// The first `n` scans, in order.
    pub fn scans(&self, n: u64) -> Vec<SimulatedScan> {
        (1..=n).map(|k| self.scan(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> EnergyGrid {
        EnergyGrid::new(25.8, 37.8, 0.05).unwrap()
    }

    #[test]
    fn grid_has_expected_bin_count_and_edges() {
        let grid = default_grid();
        assert_eq!(grid.len(), 241);
        assert_eq!(grid.energy_at(0), 25.8);
        assert!((grid.energy_at(240) - 37.8).abs() < 1e-9);
        // strictly increasing
        for i in 1..grid.len() {
            assert!(grid.energy_at(i) > grid.energy_at(i - 1));
        }
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(EnergyGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(EnergyGrid::new(2.0, 1.0, 0.1).is_err());
        assert!(EnergyGrid::new(1.0, 2.0, 0.0).is_err());
        assert!(EnergyGrid::new(1.0, 2.0, -0.1).is_err());
        assert!(EnergyGrid::new(f64::NAN, 2.0, 0.1).is_err());
    }

    #[test]
    fn nearest_bin_snaps_within_half_step() {
        let grid = default_grid();
        assert_eq!(grid.nearest_bin(25.8).unwrap(), 0);
        assert_eq!(grid.nearest_bin(25.82).unwrap(), 0);
        assert_eq!(grid.nearest_bin(25.83).unwrap(), 1);
        assert_eq!(grid.nearest_bin(37.8).unwrap(), 240);
        assert!(grid.nearest_bin(25.0).is_err());
        assert!(grid.nearest_bin(38.5).is_err());
    }

    #[test]
    fn flat_dos_evaluates_to_background_times_scale() {
        let grid = default_grid();
        let dos = DosModel::new(vec![], 0.7, 2.0).unwrap();
        let theta = dos.eval_theta_bar(&grid);
        assert!(theta.iter().all(|&t| (t - 1.4).abs() < 1e-15));
    }

    #[test]
    fn centered_gaussian_peak_is_symmetric_with_max_at_center() {
        let grid = EnergyGrid::new(-2.0, 2.0, 0.1).unwrap();
        let dos = DosModel::new(
            vec![Peak {
                center_ev: 0.0,
                width_ev: 0.5,
                amplitude: 3.0,
                shape: PeakShape::Gaussian,
            }],
            0.0,
            1.0,
        )
        .unwrap();
        let theta = dos.eval_theta_bar(&grid);
        let center = grid.nearest_bin(0.0).unwrap();
        let max_bin = (0..theta.len())
            .max_by(|&a, &b| theta[a].total_cmp(&theta[b]))
            .unwrap();
        assert_eq!(max_bin, center);
        for off in 1..=10 {
            assert!((theta[center - off] - theta[center + off]).abs() < 1e-12);
        }
    }

    #[test]
    fn lorentzian_peak_has_heavier_tails_than_gaussian() {
        let p_gauss = Peak {
            center_ev: 0.0,
            width_ev: 0.5,
            amplitude: 1.0,
            shape: PeakShape::Gaussian,
        };
        let p_lor = Peak {
            shape: PeakShape::Lorentzian,
            ..p_gauss.clone()
        };
        assert_eq!(p_gauss.evaluate(0.0), 1.0);
        assert_eq!(p_lor.evaluate(0.0), 1.0);
        assert!(p_lor.evaluate(3.0) > p_gauss.evaluate(3.0));
    }

    #[test]
    fn uniform_dispersion_matches_closed_form() {
        let model = IntensityModel::new(1.0, 0.3, IntensityDistribution::Uniform).unwrap();
        assert!((model.implied_dispersion() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn intensity_model_rejects_degenerate_width() {
        assert!(IntensityModel::new(1.0, 0.0, IntensityDistribution::Uniform).is_err());
        assert!(IntensityModel::new(1.0, 1.0, IntensityDistribution::Uniform).is_err());
        assert!(IntensityModel::new(0.0, 0.5, IntensityDistribution::Uniform).is_err());
    }

    #[test]
    fn uniform_samples_stay_in_band() {
        let model = IntensityModel::new(2.0, 0.4, IntensityDistribution::Uniform).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x = model.sample(&mut rng);
            assert!(x >= 2.0 * 0.6 && x <= 2.0 * 1.4);
        }
    }

    #[test]
    fn truncated_gaussian_dispersion_matches_monte_carlo() {
        let model =
            IntensityModel::new(1.0, 0.5, IntensityDistribution::TruncatedGaussian).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let x = model.sample(&mut rng) - 1.0;
            assert!(x.abs() <= 0.5);
            sum += x;
            sum2 += x * x;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let expected = model.implied_dispersion();
        assert!(
            (var - expected).abs() / expected < 0.01,
            "empirical {var}, closed form {expected}"
        );
    }

    #[test]
    fn noise_profile_vanishes_outside_window() {
        let grid = default_grid();
        let profile = NoiseProfile::new(
            28.8,
            35.9,
            NoiseShape::Bump {
                amplitude: 0.05,
                pedestal_frac: 0.5,
            },
            NoiseMode::Deterministic,
        )
        .unwrap();
        let values = profile.evaluate(&grid);
        let (lo, hi) = profile.window_bins(&grid).unwrap();
        assert_eq!((lo, hi), (60, 202));
        for (i, &v) in values.iter().enumerate() {
            if i < lo || i > hi {
                assert_eq!(v, 0.0, "bin {i} should be clean");
            } else {
                assert!(v >= 0.05 * 0.5 - 1e-12 && v <= 0.05 + 1e-12);
            }
        }
    }

    #[test]
    fn tabulated_shape_interpolates_linearly() {
        let grid = EnergyGrid::new(0.0, 4.0, 1.0).unwrap();
        let profile = NoiseProfile::new(
            1.0,
            3.0,
            NoiseShape::Tabulated {
                points: vec![(1.0, 0.0), (3.0, 2.0)],
            },
            NoiseMode::Deterministic,
        )
        .unwrap();
        let values = profile.evaluate(&grid);
        assert_eq!(values, vec![0.0, 0.0, 1.0, 2.0, 0.0]);
    }

    #[test]
    fn tabulated_shape_rejects_unsorted_or_negative_points() {
        let mk = |points| {
            NoiseProfile::new(
                0.0,
                1.0,
                NoiseShape::Tabulated { points },
                NoiseMode::Deterministic,
            )
        };
        assert!(mk(vec![]).is_err());
        assert!(mk(vec![(0.5, -1.0)]).is_err());
        assert!(mk(vec![(0.5, 1.0), (0.2, 1.0)]).is_err());
    }

    #[test]
    fn disabled_profile_is_flat_zero_but_keeps_window() {
        let grid = default_grid();
        let profile = NoiseProfile::disabled(28.8, 35.9).unwrap();
        assert!(profile.evaluate(&grid).iter().all(|&v| v == 0.0));
        assert!(profile.window_bins(&grid).is_some());
        assert_eq!(profile.bound(), 0.0);
    }

    fn default_generator(seed: u64, sigma_w: f64) -> ScanGenerator {
        let grid = default_grid();
        let dos = DosModel::new(
            vec![Peak {
                center_ev: 30.0,
                width_ev: 1.0,
                amplitude: 2.0,
                shape: PeakShape::Gaussian,
            }],
            0.5,
            1.0,
        )
        .unwrap();
        let intensity = IntensityModel::new(1.0, 0.9, IntensityDistribution::Uniform).unwrap();
        let noise = NoiseProfile::new(
            28.8,
            35.9,
            NoiseShape::Bump {
                amplitude: 0.05,
                pedestal_frac: 0.5,
            },
            NoiseMode::Deterministic,
        )
        .unwrap();
        ScanGenerator::new(
            &dos,
            &grid,
            intensity,
            &noise,
            DisturbanceModel::new(sigma_w).unwrap(),
            seed,
        )
    }

    #[test]
    fn clean_scan_is_exactly_intensity_times_theta() {
        let grid = default_grid();
        let dos = DosModel::new(vec![], 0.8, 1.5).unwrap();
        let intensity = IntensityModel::new(1.0, 0.5, IntensityDistribution::Uniform).unwrap();
        let noise = NoiseProfile::disabled(28.8, 35.9).unwrap();
        let generator = ScanGenerator::new(
            &dos,
            &grid,
            intensity,
            &noise,
            DisturbanceModel::new(0.0).unwrap(),
            42,
        );
        let scan = generator.scan(1);
        let i = scan.record.intensity();
        for (&j, &t) in scan.record.photocurrent().iter().zip(generator.theta_bar()) {
            assert_eq!(j, i * t);
        }
        assert_eq!(scan.clamped_bins, 0);
    }

    #[test]
    fn bins_outside_window_match_clean_scan() {
        let generator_noisy = default_generator(9, 0.01);
        let grid = default_grid();
        let dos = DosModel::new(
            vec![Peak {
                center_ev: 30.0,
                width_ev: 1.0,
                amplitude: 2.0,
                shape: PeakShape::Gaussian,
            }],
            0.5,
            1.0,
        )
        .unwrap();
        let intensity = IntensityModel::new(1.0, 0.9, IntensityDistribution::Uniform).unwrap();
        let clean = ScanGenerator::new(
            &dos,
            &grid,
            intensity,
            &NoiseProfile::disabled(28.8, 35.9).unwrap(),
            DisturbanceModel::new(0.01).unwrap(),
            9,
        );
        let noisy_scan = generator_noisy.scan(3);
        let clean_scan = clean.scan(3);
        // identical seeds, identical draw order: outside the window the
        // records agree bit for bit
        for i in 0..60 {
            assert_eq!(
                noisy_scan.record.photocurrent()[i],
                clean_scan.record.photocurrent()[i]
            );
        }
        for i in 203..241 {
            assert_eq!(
                noisy_scan.record.photocurrent()[i],
                clean_scan.record.photocurrent()[i]
            );
        }
        // and inside it they differ by exactly the profile
        let profile = generator_noisy.noise_profile();
        for i in 60..=202 {
            let diff = noisy_scan.record.photocurrent()[i] - clean_scan.record.photocurrent()[i];
            assert!((diff - profile[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_seeds_reproduce_scans_bitwise() {
        let a = default_generator(1234, 0.01);
        let b = default_generator(1234, 0.01);
        for k in 1..=20 {
            assert_eq!(a.scan(k), b.scan(k));
        }
        let c = default_generator(1235, 0.01);
        assert_ne!(a.scan(1), c.scan(1));
    }

    #[test]
    fn scan_order_does_not_matter() {
        let generator = default_generator(5, 0.02);
        let forward: Vec<_> = (1..=10).map(|k| generator.scan(k)).collect();
        let backward: Vec<_> = (1..=10).rev().map(|k| generator.scan(k)).collect();
        for (f, b) in forward.iter().zip(backward.iter().rev()) {
            assert_eq!(f, b);
        }
    }

    #[test]
    fn expected_photocurrent_matches_mean_intensity_times_theta_plus_noise() {
        let generator = default_generator(77, 0.01);
        let n = 10_000u64;
        let bins = [0usize, 100, 150, 240];
        let mut sums = [0.0f64; 4];
        let mut sums2 = [0.0f64; 4];
        for k in 1..=n {
            let scan = generator.scan(k);
            for (slot, &bin) in bins.iter().enumerate() {
                let v = scan.record.photocurrent()[bin];
                sums[slot] += v;
                sums2[slot] += v * v;
            }
        }
        for (slot, &bin) in bins.iter().enumerate() {
            let mean = sums[slot] / n as f64;
            let var = sums2[slot] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            let expected = 1.0 * generator.theta_bar()[bin] + generator.noise_profile()[bin];
            assert!(
                (mean - expected).abs() <= 3.0 * se,
                "bin {bin}: mean {mean}, expected {expected}, se {se}"
            );
        }
    }

    #[test]
    fn deterministic_noise_is_uncorrelated_with_intensity() {
        // with a deterministic profile the noise term is constant, so the
        // sample covariance with the intensity is zero by construction
        let generator = default_generator(3, 0.0);
        let profile = generator.noise_profile();
        let bin = 130usize;
        assert!(profile[bin] > 0.0);
        let n = 1000;
        let mut cov = 0.0;
        let scans: Vec<_> = (1..=n).map(|k| generator.scan(k)).collect();
        let mean_i = scans.iter().map(|s| s.record.intensity()).sum::<f64>() / n as f64;
        for s in &scans {
            cov += (s.record.intensity() - mean_i) * (profile[bin] - profile[bin]);
        }
        assert_eq!(cov, 0.0);
    }

    #[test]
    fn jittered_noise_stays_nonnegative_and_nearly_uncorrelated() {
        let grid = default_grid();
        let dos = DosModel::new(vec![], 0.5, 1.0).unwrap();
        let intensity = IntensityModel::new(1.0, 0.9, IntensityDistribution::Uniform).unwrap();
        let noise = NoiseProfile::new(
            28.8,
            35.9,
            NoiseShape::Bump {
                amplitude: 0.2,
                pedestal_frac: 0.5,
            },
            NoiseMode::PerScanJitter { amplitude: 0.8 },
        )
        .unwrap();
        let generator = ScanGenerator::new(
            &dos,
            &grid,
            intensity,
            &noise,
            DisturbanceModel::new(0.0).unwrap(),
            21,
        );
        let bin = 130usize;
        let theta = generator.theta_bar()[bin];
        let n = 10_000usize;
        let mut is = Vec::with_capacity(n);
        let mut ns = Vec::with_capacity(n);
        for k in 1..=n as u64 {
            let scan = generator.scan(k);
            let i = scan.record.intensity();
            let noise_part = scan.record.photocurrent()[bin] - i * theta;
            assert!(noise_part >= -1e-12, "noise must stay non-negative");
            is.push(i);
            ns.push(noise_part);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mi, mn) = (mean(&is), mean(&ns));
        let mut c = 0.0;
        let mut vi = 0.0;
        let mut vn = 0.0;
        for (i, nv) in is.iter().zip(&ns) {
            c += (i - mi) * (nv - mn);
            vi += (i - mi) * (i - mi);
            vn += (nv - mn) * (nv - mn);
        }
        let corr = c / (vi.sqrt() * vn.sqrt());
        assert!(
            corr.abs() <= 3.0 / (n as f64).sqrt(),
            "correlation {corr} exceeds the Monte-Carlo band"
        );
    }

    #[test]
    fn negative_parameter_draws_are_clamped_and_counted() {
        let grid = EnergyGrid::new(0.0, 1.0, 0.5).unwrap();
        // tiny truth, huge disturbance: clamping must trigger
        let dos = DosModel::new(vec![], 0.01, 1.0).unwrap();
        let intensity = IntensityModel::new(1.0, 0.5, IntensityDistribution::Uniform).unwrap();
        let noise = NoiseProfile::disabled(0.2, 0.8).unwrap();
        let generator = ScanGenerator::new(
            &dos,
            &grid,
            intensity,
            &noise,
            DisturbanceModel::new(5.0).unwrap(),
            13,
        );
        let mut clamped = 0;
        for k in 1..=200 {
            let scan = generator.scan(k);
            clamped += scan.clamped_bins;
            assert!(scan.record.photocurrent().iter().all(|&j| j >= 0.0));
        }
        assert!(clamped > 0, "expected at least one clamped bin");
    }
}
