// SPDX-License-Identifier: MIT OR Apache-2.0

//! Versioned pipeline configuration.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{BandMode, ComponentFractions, DEFAULT_THRESHOLD};
use crate::corpus::{TemplateId, WorldConfig};
use crate::editing::EditBands;
use crate::error::{LabError, Result};
use crate::model::ModelConfig;
use crate::scoring::NoiseConfig;
use crate::trainer::TrainConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSection {
    pub seed: u64,
    #[serde(flatten)]
    pub config: WorldConfig,
}

impl Default for WorldSection {
    fn default() -> Self {
        Self { seed: 1, config: WorldConfig::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub init_seed: u64,
    #[serde(flatten)]
    pub config: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComponentsSection {
    pub mode: BandMode,
    pub threshold: f64,
    #[serde(flatten)]
    pub fractions: ComponentFractions,
}

impl Default for ComponentsSection {
    fn default() -> Self {
        Self { mode: BandMode::Fractions, threshold: DEFAULT_THRESHOLD, fractions: ComponentFractions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterchangeSection {
    pub pairs_per_mode: usize,
    pub seed: u64,
    pub templates: Vec<TemplateId>,
}

impl Default for InterchangeSection {
    fn default() -> Self {
        Self { pairs_per_mode: 100, seed: 11, templates: TemplateId::QUERY_PAIR.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditSection {
    pub count: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub bands: EditBands,
}

impl Default for EditSection {
    fn default() -> Self {
        Self { count: 300, seed: 13, bands: EditBands::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabConfig {
    pub version: u32,
    pub world: WorldSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub noise: NoiseConfig,
    pub components: ComponentsSection,
    pub interchange: InterchangeSection,
    pub edit: EditSection,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            world: WorldSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            noise: NoiseConfig::default(),
            components: ComponentsSection::default(),
            interchange: InterchangeSection::default(),
            edit: EditSection::default(),
        }
    }
}

impl LabConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Self::from_value(v)
    }

    fn from_value(v: Value) -> Result<Self> {
        let version = v.get("version").and_then(Value::as_u64).unwrap_or(CONFIG_VERSION as u64);
        if version != CONFIG_VERSION as u64 {
            return Err(LabError::Config(format!("unsupported config version {version}")));
        }
        let c: LabConfig = serde_json::from_value(v)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.world.config.validate()?;
        self.train.validate()?;
        self.noise.validate()?;
        if !(self.components.threshold.is_finite()) {
            return Err(LabError::Config("threshold must be finite".into()));
        }
        if self.interchange.templates.is_empty() {
            return Err(LabError::Config("interchange needs at least one template".into()));
        }
        Ok(())
    }

    /// Apply `section.key=value` overrides. Values parse as JSON when they
    /// can and fall back to strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("override `{o}` is not key=value")))?;
            let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let pointer = format!("/{}", path.replace('.', "/"));
            let slot = v
                .pointer_mut(&pointer)
                .filter(|_| !path.is_empty())
                .ok_or_else(|| LabError::Config(format!("unknown config key `{path}`")))?;
            *slot = value;
        }
        Self::from_value(v)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = LabConfig::default();
        assert_eq!(LabConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = LabConfig::from_json(r#"{"version": 1, "model": {"layers": 4, "d_model": 32}}"#).unwrap();
        assert_eq!(c.model.config.layers, 4);
        assert_eq!(c.model.config.heads, ModelConfig::default().heads);
        assert_eq!(c.world, WorldSection::default());
    }

    #[test]
    fn overrides_apply_and_reject_unknown_keys() {
        let c = LabConfig::default().with_overrides(&["train.steps=7".into(), "world.seed=9".into()]).unwrap();
        assert_eq!(c.train.steps, 7);
        assert_eq!(c.world.seed, 9);
        assert!(LabConfig::default().with_overrides(&["train.nope=1".into()]).is_err());
        assert!(LabConfig::default().with_overrides(&["noequals".into()]).is_err());
    }

    #[test]
    fn wrong_version_rejected() {
        assert!(LabConfig::from_json(r#"{"version": 99}"#).is_err());
    }
}
