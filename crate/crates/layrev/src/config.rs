//! Class registry/legend files and synthesis settings.

use std::path::Path;

use layrev_core::layout::ClassRegistry;
use layrev_core::render::{parse_class_config, ColorLegend, LegendError};
use layrev_core::trajectory::{SynthConfig, SynthError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Classes { path: String, source: LegendError },
    #[error("{path}: {source}")]
    Toml { path: String, source: toml::de::Error },
    #[error("{path}: {source}")]
    Synth { path: String, source: SynthError },
}

/// Element classes and their render colors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classes {
    pub registry: ClassRegistry,
    pub legend: ColorLegend,
}

impl Default for Classes {
    fn default() -> Self {
        let registry = ClassRegistry::material_default();
        let legend = ColorLegend::default_for(&registry);
        Self { registry, legend }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

/// Tab-separated class file, or the built-in Material classes when `None`.
pub fn load_classes(path: Option<&Path>) -> Result<Classes, ConfigError> {
    let Some(path) = path else {
        return Ok(Classes::default());
    };
    let (registry, legend) =
        parse_class_config(&read(path)?).map_err(|source| ConfigError::Classes { path: path.display().to_string(), source })?;
    Ok(Classes { registry, legend })
}

/// TOML synthesis settings; missing keys take their defaults.
pub fn load_synth_config(path: Option<&Path>) -> Result<SynthConfig, ConfigError> {
    let Some(path) = path else {
        return Ok(SynthConfig::default());
    };
    let cfg: SynthConfig =
        toml::from_str(&read(path)?).map_err(|source| ConfigError::Toml { path: path.display().to_string(), source })?;
    cfg.validate().map_err(|source| ConfigError::Synth { path: path.display().to_string(), source })?;
    Ok(cfg)
}
