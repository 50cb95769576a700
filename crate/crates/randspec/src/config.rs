//! TOML experiment configuration.
//!
//! Sectioned key/value layout with strict parsing: unknown keys are
//! errors, not silently ignored typos. Every field has a documented
//! default; [`Config::default_toml`] renders the full default file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::estimator::{InitialGuess, VariancePolicy};
use crate::harness::ExperimentConfig;
use crate::spectrum::{
    DisturbanceModel, DosModel, EnergyGrid, IntensityDistribution, IntensityModel, NoiseMode,
    NoiseProfile, NoiseShape, Peak, PeakShape,
};

#[derive(Debug)]
pub enum ConfigError {
    /// The file could not be read at all.
    Read { path: PathBuf, source: std::io::Error },
    /// TOML syntax or schema violation (unknown key, wrong type, ...).
    Parse { message: String },
    /// A parsed value fails a model invariant; `key` names the offender.
    Invalid { key: &'static str, message: String },
    /// Neither the command line nor the config file provided a seed.
    MissingSeed,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read { path, source } => {
                write!(f, "cannot read config {}: {source}", path.display())
            }
            ConfigError::Parse { message } => write!(f, "invalid config: {message}"),
            ConfigError::Invalid { key, message } => write!(f, "config key {key}: {message}"),
            ConfigError::MissingSeed => write!(
                f,
                "no seed given: pass --seed or set experiment.seed in the config"
            ),
        }
    }
}

impl std::error::Error for ConfigError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            ConfigError::Read { source, .. } => Some(source),
            _ => None,
        }
    }
}

fn d_n_scans() -> u64 {
    50
}
fn d_initial_guess() -> InitialGuessConfig {
    InitialGuessConfig::Scalar(0.0)
}
fn d_variance_policy() -> VariancePolicyConfig {
    VariancePolicyConfig::FixedKnown
}
fn d_stab_rel_tol() -> f64 {
    0.05
}
fn d_stab_window() -> usize {
    5
}
fn d_grid_start() -> f64 {
    25.8
}
fn d_grid_stop() -> f64 {
    37.8
}
fn d_grid_step() -> f64 {
    0.05
}
fn d_background() -> f64 {
    0.6
}
fn d_scale_const() -> f64 {
    1.0
}
fn d_peaks() -> Vec<PeakConfig> {
    vec![
        PeakConfig {
            center_ev: 27.3,
            width_ev: 0.7,
            amplitude: 2.0,
            shape: PeakShapeConfig::Gaussian,
        },
        PeakConfig {
            center_ev: 33.8,
            width_ev: 1.1,
            amplitude: 0.6,
            shape: PeakShapeConfig::Gaussian,
        },
    ]
}
fn d_intensity_mean() -> f64 {
    1.0
}
fn d_half_width_frac() -> f64 {
    0.9
}
fn d_distribution() -> DistributionConfig {
    DistributionConfig::Uniform
}
fn d_true() -> bool {
    true
}
fn d_window_lo() -> f64 {
    28.8
}
fn d_window_hi() -> f64 {
    35.9
}
fn d_noise_shape() -> NoiseShapeConfig {
    NoiseShapeConfig::Bump
}
fn d_noise_amplitude() -> f64 {
    0.04
}
fn d_pedestal_frac() -> f64 {
    0.5
}
fn d_jitter() -> f64 {
    0.0
}
fn d_sigma_w() -> f64 {
    0.005
}

/// Scalar guesses broadcast over the grid; a vector must match the grid
/// length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialGuessConfig {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariancePolicyConfig {
    FixedKnown,
    RunningEmpirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PeakShapeConfig {
    Gaussian,
    Lorentzian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionConfig {
    Uniform,
    TruncatedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseShapeConfig {
    Bump,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "d_n_scans")]
    pub n_scans: u64,
    /// Base seed; may be omitted and passed on the command line instead.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "d_initial_guess")]
    pub initial_guess: InitialGuessConfig,
    /// Energies of the tracked control points; defaults to 12 bins
    /// evenly spaced over the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_points_ev: Option<Vec<f64>>,
    #[serde(default = "d_variance_policy")]
    pub variance_policy: VariancePolicyConfig,
    #[serde(default = "d_stab_rel_tol")]
    pub stabilization_rel_tol: f64,
    #[serde(default = "d_stab_window")]
    pub stabilization_window: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n_scans: d_n_scans(),
            seed: None,
            initial_guess: d_initial_guess(),
            control_points_ev: None,
            variance_policy: d_variance_policy(),
            stabilization_rel_tol: d_stab_rel_tol(),
            stabilization_window: d_stab_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "d_grid_start")]
    pub start_ev: f64,
    #[serde(default = "d_grid_stop")]
    pub stop_ev: f64,
    #[serde(default = "d_grid_step")]
    pub step_ev: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            start_ev: d_grid_start(),
            stop_ev: d_grid_stop(),
            step_ev: d_grid_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakConfig {
    pub center_ev: f64,
    pub width_ev: f64,
    pub amplitude: f64,
    pub shape: PeakShapeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosSection {
    #[serde(default = "d_background")]
    pub background: f64,
    #[serde(default = "d_scale_const")]
    pub scale_const: f64,
    #[serde(default = "d_peaks")]
    pub peaks: Vec<PeakConfig>,
}

impl Default for DosSection {
    fn default() -> Self {
        Self {
            background: d_background(),
            scale_const: d_scale_const(),
            peaks: d_peaks(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensitySection {
    #[serde(default = "d_intensity_mean")]
    pub mean: f64,
    #[serde(default = "d_half_width_frac")]
    pub half_width_frac: f64,
    #[serde(default = "d_distribution")]
    pub distribution: DistributionConfig,
}

impl Default for IntensitySection {
    fn default() -> Self {
        Self {
            mean: d_intensity_mean(),
            half_width_frac: d_half_width_frac(),
            distribution: d_distribution(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisePointConfig {
    pub energy_ev: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "d_true")]
    pub enabled: bool,
    #[serde(default = "d_window_lo")]
    pub window_lo_ev: f64,
    #[serde(default = "d_window_hi")]
    pub window_hi_ev: f64,
    #[serde(default = "d_noise_shape")]
    pub shape: NoiseShapeConfig,
    /// Bump height (counts); used by the `bump` shape.
    #[serde(default = "d_noise_amplitude")]
    pub amplitude: f64,
    /// Fraction of the bump height kept flat across the whole window.
    #[serde(default = "d_pedestal_frac")]
    pub pedestal_frac: f64,
    /// Zero-mean per-scan rescaling amplitude in [0, 1]; 0 keeps the
    /// profile deterministic.
    #[serde(default = "d_jitter")]
    pub jitter_amplitude: f64,
    /// Tabulated shape points; required by the `tabulated` shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<NoisePointConfig>>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            enabled: true,
            window_lo_ev: d_window_lo(),
            window_hi_ev: d_window_hi(),
            shape: d_noise_shape(),
            amplitude: d_noise_amplitude(),
            pedestal_frac: d_pedestal_frac(),
            jitter_amplitude: d_jitter(),
            points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSection {
    #[serde(default = "d_sigma_w")]
    pub sigma_w: f64,
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        Self {
            sigma_w: d_sigma_w(),
        }
    }
}

/// The whole config file. Any section (or the whole file) may be empty;
/// missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub dos: DosSection,
    #[serde(default)]
    pub intensity: IntensitySection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub disturbance: DisturbanceSection,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            message: e.to_string(),
        })
    }

    /// The full default config as a TOML document.
    pub fn default_toml() -> String {
        toml::to_string_pretty(&Config::default()).expect("default config serializes")
    }

    pub fn energy_grid(&self) -> Result<EnergyGrid, ConfigError> {
        EnergyGrid::new(self.grid.start_ev, self.grid.stop_ev, self.grid.step_ev).map_err(|e| {
            ConfigError::Invalid {
                key: "grid",
                message: e.to_string(),
            }
        })
    }

    pub fn dos_model(&self) -> Result<DosModel, ConfigError> {
        let peaks = self
            .dos
            .peaks
            .iter()
            .map(|p| Peak {
                center_ev: p.center_ev,
                width_ev: p.width_ev,
                amplitude: p.amplitude,
                shape: match p.shape {
                    PeakShapeConfig::Gaussian => PeakShape::Gaussian,
                    PeakShapeConfig::Lorentzian => PeakShape::Lorentzian,
                },
            })
            .collect();
        DosModel::new(peaks, self.dos.background, self.dos.scale_const).map_err(|e| {
            ConfigError::Invalid {
                key: "dos",
                message: e.to_string(),
            }
        })
    }

    pub fn intensity_model(&self) -> Result<IntensityModel, ConfigError> {
        let distribution = match self.intensity.distribution {
            DistributionConfig::Uniform => IntensityDistribution::Uniform,
            DistributionConfig::TruncatedGaussian => IntensityDistribution::TruncatedGaussian,
        };
        IntensityModel::new(self.intensity.mean, self.intensity.half_width_frac, distribution)
            .map_err(|e| ConfigError::Invalid {
                key: "intensity",
                message: e.to_string(),
            })
    }

    pub fn noise_profile(&self) -> Result<NoiseProfile, ConfigError> {
        if !self.noise.enabled {
            return NoiseProfile::disabled(self.noise.window_lo_ev, self.noise.window_hi_ev)
                .map_err(|e| ConfigError::Invalid {
                    key: "noise.window_lo_ev/window_hi_ev",
                    message: e.to_string(),
                });
        }
        let shape = match self.noise.shape {
            NoiseShapeConfig::Bump => {
                if self.noise.points.is_some() {
                    return Err(ConfigError::Invalid {
                        key: "noise.points",
                        message: "points are only valid with shape = \"tabulated\"".into(),
                    });
                }
                NoiseShape::Bump {
                    amplitude: self.noise.amplitude,
                    pedestal_frac: self.noise.pedestal_frac,
                }
            }
            NoiseShapeConfig::Tabulated => {
                let points = self.noise.points.as_ref().ok_or(ConfigError::Invalid {
                    key: "noise.points",
                    message: "shape = \"tabulated\" requires a points array".into(),
                })?;
                NoiseShape::Tabulated {
                    points: points.iter().map(|p| (p.energy_ev, p.value)).collect(),
                }
            }
        };
        let mode = if self.noise.jitter_amplitude > 0.0 {
            NoiseMode::PerScanJitter {
                amplitude: self.noise.jitter_amplitude,
            }
        } else {
            NoiseMode::Deterministic
        };
        let profile = NoiseProfile::new(self.noise.window_lo_ev, self.noise.window_hi_ev, shape, mode)
            .map_err(|e| ConfigError::Invalid {
                key: "noise",
                message: e.to_string(),
            })?;
        // the window must actually touch the grid
        let grid = self.energy_grid()?;
        if profile.window_bins(&grid).is_none() {
            return Err(ConfigError::Invalid {
                key: "noise.window_lo_ev/window_hi_ev",
                message: format!(
                    "noise window [{}, {}] eV lies outside the grid [{}, {}] eV",
                    self.noise.window_lo_ev,
                    self.noise.window_hi_ev,
                    self.grid.start_ev,
                    self.grid.stop_ev
                ),
            });
        }
        Ok(profile)
    }

    pub fn disturbance_model(&self) -> Result<DisturbanceModel, ConfigError> {
        DisturbanceModel::new(self.disturbance.sigma_w).map_err(|e| ConfigError::Invalid {
            key: "disturbance.sigma_w",
            message: e.to_string(),
        })
    }

    pub fn initial_guess(&self) -> InitialGuess {
        match &self.experiment.initial_guess {
            InitialGuessConfig::Scalar(v) if *v == 0.0 => InitialGuess::Zero,
            InitialGuessConfig::Scalar(v) => InitialGuess::Scalar(*v),
            InitialGuessConfig::Vector(v) => InitialGuess::Vector(v.clone()),
        }
    }

    pub fn variance_policy(&self) -> VariancePolicy {
        match self.experiment.variance_policy {
            VariancePolicyConfig::FixedKnown => VariancePolicy::FixedKnown,
            VariancePolicyConfig::RunningEmpirical => VariancePolicy::RunningEmpirical,
        }
    }

    /// Resolves the seed: a command-line override wins, then the config;
    /// with neither, the seed is missing (a usage error).
    pub fn resolve_seed(&self, seed_override: Option<u64>) -> Result<u64, ConfigError> {
        seed_override
            .or(self.experiment.seed)
            .ok_or(ConfigError::MissingSeed)
    }

    /// Builds the validated experiment description.
    pub fn to_experiment(&self, seed_override: Option<u64>) -> Result<ExperimentConfig, ConfigError> {
        if self.experiment.n_scans == 0 {
            return Err(ConfigError::Invalid {
                key: "experiment.n_scans",
                message: "must be at least 1".into(),
            });
        }
        if self.experiment.stabilization_window < 2 {
            return Err(ConfigError::Invalid {
                key: "experiment.stabilization_window",
                message: "must be at least 2".into(),
            });
        }
        let rel_tol = self.experiment.stabilization_rel_tol;
        if !rel_tol.is_finite() || rel_tol <= 0.0 {
            return Err(ConfigError::Invalid {
                key: "experiment.stabilization_rel_tol",
                message: format!("must be strictly positive and finite, got {rel_tol}"),
            });
        }
        Ok(ExperimentConfig {
            n_scans: self.experiment.n_scans,
            grid: self.energy_grid()?,
            dos: self.dos_model()?,
            intensity: self.intensity_model()?,
            noise: self.noise_profile()?,
            disturbance: self.disturbance_model()?,
            control_points_ev: self.experiment.control_points_ev.clone(),
            seed: self.resolve_seed(seed_override)?,
            initial_guess: self.initial_guess(),
            variance_policy: self.variance_policy(),
            stabilization_rel_tol: rel_tol,
            stabilization_window: self.experiment.stabilization_window,
        })
    }
}
