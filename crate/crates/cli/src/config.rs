use std::path::{Path, PathBuf};

use meshlab_core::calibration::{CalibrationOptions, Noise};
use meshlab_core::quantum::SourceModel;
use meshlab_core::FabricationModel;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

/// Defaults read from `--config` or `MESHLAB_CONFIG`. Command-line flags win.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub hom: HomConfig,
    pub calibrate: CalibrateConfig,
    pub complexity: ComplexityConfig,
    pub fabrication: FabricationModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomConfig {
    pub source: SourceModel,
    pub delay_min: f64,
    pub delay_max: f64,
    pub delay_points: usize,
    pub pulses: Option<f64>,
}

impl Default for HomConfig {
    fn default() -> Self {
        Self {
            source: SourceModel::default(),
            delay_min: -5.0,
            delay_max: 5.0,
            delay_points: 101,
            pulses: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    pub d: usize,
    pub noise: Noise,
    pub options: CalibrationOptions,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            d: 8,
            noise: Noise::Poisson,
            options: CalibrationOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComplexityConfig {
    pub platforms: Option<PathBuf>,
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            platforms: None,
            r_min: 0.01,
            r_max: 10.0,
            points: 61,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_uses_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 3, "hom": {"delay_points": 11}}"#).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.hom.delay_points, 11);
        assert_eq!(c.hom.source, SourceModel::default());
        assert_eq!(c.calibrate.d, 8);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"hom": {"delay": 1}}"#).is_err());
    }
}
