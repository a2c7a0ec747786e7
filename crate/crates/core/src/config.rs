//! Run configuration, read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostWeights;
use crate::experiment::{DampingSettings, SimulationSettings};
use crate::optimizer::OptimizerSettings;
use crate::ramp::{RampKind, DEFAULT_SEGMENTS};
use crate::trap::CurrentMapCalibration;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Transport,
    Damping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampFamily {
    Linear,
    #[default]
    Exponential,
    PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RampConfig {
    pub kind: RampFamily,
    /// Segments per channel for piecewise-linear ramps.
    pub segments: usize,
    /// Ramp durations in seconds; a sweep visits them longest first.
    pub durations: Vec<f64>,
}

impl Default for RampConfig {
    fn default() -> Self {
        Self {
            kind: RampFamily::default(),
            segments: DEFAULT_SEGMENTS,
            durations: vec![1.0, 0.4, 0.2, 0.1, 0.05],
        }
    }
}

impl RampConfig {
    pub fn ramp_kind(&self) -> RampKind {
        match self.kind {
            RampFamily::Linear => RampKind::Linear,
            RampFamily::Exponential => RampKind::Exponential,
            RampFamily::PiecewiseLinear => RampKind::PiecewiseLinear {
                segments: self.segments,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    /// Interlaced runs, each with the pulse train shifted by `period / n`.
    pub interlace: usize,
    /// Keep every n-th integrator step in the trajectory output.
    pub stride: usize,
    /// Pulses kept per interlaced run.
    pub pulses: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            interlace: 4,
            stride: 16,
            pulses: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub ramp: RampConfig,
    pub weights: CostWeights,
    pub simulation: SimulationSettings,
    pub calibration: CurrentMapCalibration,
    pub optimizer: OptimizerSettings,
    pub damping: DampingSettings,
    pub trace: TraceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            seed: 0,
            out_dir: None,
            ramp: RampConfig::default(),
            weights: CostWeights::default(),
            simulation: SimulationSettings::default(),
            calibration: CurrentMapCalibration::default(),
            optimizer: OptimizerSettings::default(),
            damping: DampingSettings::default(),
            trace: TraceConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serialises to TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.ramp.durations;
        if d.is_empty() {
            return Err(ConfigError::Invalid("ramp.durations is empty".into()));
        }
        if d.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(ConfigError::Invalid("ramp.durations must be positive".into()));
        }
        if d.windows(2).any(|w| w[1] >= w[0]) {
            return Err(ConfigError::Invalid(
                "ramp.durations must be strictly descending".into(),
            ));
        }
        if self.ramp.kind == RampFamily::PiecewiseLinear && self.ramp.segments == 0 {
            return Err(ConfigError::Invalid("ramp.segments must be at least 1".into()));
        }
        if self.optimizer.budget == 0 {
            return Err(ConfigError::Invalid("optimizer.budget must be at least 1".into()));
        }
        if self.trace.interlace == 0 || self.trace.stride == 0 {
            return Err(ConfigError::Invalid(
                "trace.interlace and trace.stride must be at least 1".into(),
            ));
        }
        if let Err(e) = self.simulation.pulses.validate() {
            return Err(ConfigError::Invalid(e.to_string()));
        }
        Ok(())
    }
}
