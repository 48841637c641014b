//! Run configuration files.
//!
//! A config is TOML with one section per module:
//!
//! ```toml
//! [generate]
//! count = 450
//! seed = 7
//!
//! [reward]
//! variant = "wo_up"
//! punish_partial_matches = false
//!
//! [grpo]
//! iterations = 500
//! ```
//!
//! Missing keys take their defaults. In `[reward]` the `variant` preset is
//! applied first and the remaining keys override it. A run manifest written
//! by the CLI is also accepted; its `config` object is used.

use crate::datagen::GenSpec;
use crate::grpo::GrpoConfig;
use crate::reward::{RewardConfig, RewardVariant};
use crate::scene::AttributeVocab;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub count: usize,
    pub object_count_range: (usize, usize),
    pub length_weights: [f64; 4],
    pub view_mix: f64,
    pub seed: u64,
}

impl Default for GenerateSection {
    fn default() -> Self {
        let d = GenSpec::default();
        GenerateSection {
            count: d.count,
            object_count_range: d.object_count_range,
            length_weights: d.length_weights,
            view_mix: d.view_mix,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Train on the first `limit` instances only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub variants: Vec<RewardVariant>,
    /// Number of paired seeds, starting at the GRPO seed.
    pub seeds: usize,
    pub target_exact_rate: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            variants: vec![
                RewardVariant::Full,
                RewardVariant::WoObj,
                RewardVariant::WoAttr,
                RewardVariant::WoUp,
                RewardVariant::WoPun,
                RewardVariant::NaiveBinary,
            ],
            seeds: 10,
            target_exact_rate: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub vocab: AttributeVocab,
    pub generate: GenerateSection,
    pub reward: RewardConfig,
    pub grpo: GrpoConfig,
    pub train: TrainSection,
    pub compare: CompareSection,
}

impl RunConfig {
    pub fn gen_spec(&self) -> GenSpec {
        let g = &self.generate;
        GenSpec {
            count: g.count,
            object_count_range: g.object_count_range,
            length_weights: g.length_weights,
            view_mix: g.view_mix,
            seed: g.seed,
            vocab: self.vocab.clone(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let value: Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        Self::from_value(value)
    }

    /// Reads TOML, or a JSON manifest when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    fn from_value(mut value: Value) -> Result<Self, ConfigError> {
        if let Some(reward) = value.get_mut("reward") {
            let Value::Object(keys) = reward.take() else {
                return Err(ConfigError::Parse("[reward] must be a table".into()));
            };
            let variant = match keys.get("variant") {
                Some(v) => serde_json::from_value::<RewardVariant>(v.clone())
                    .map_err(|e| ConfigError::Parse(format!("reward.variant: {e}")))?,
                None => RewardVariant::Full,
            };
            let mut merged = serde_json::to_value(RewardConfig::preset(variant))
                .expect("reward config serializes");
            let target = merged.as_object_mut().expect("struct is an object");
            for (k, v) in keys {
                if !target.contains_key(&k) {
                    return Err(ConfigError::Parse(format!("unknown reward key `{k}`")));
                }
                target.insert(k, v);
            }
            *reward = merged;
        }
        serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}
