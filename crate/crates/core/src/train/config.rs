// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Optimization settings for one few-shot run. `seed` drives weight
/// initialization, batch order and dropout; it replaces `model.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_k")]
    pub k_shot: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
}

fn default_lr() -> f64 {
    1e-3
}

fn default_epochs() -> usize {
    200
}

fn default_batch() -> usize {
    2
}

fn default_k() -> usize {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            k_shot: default_k(),
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// `epochs = 0` is accepted and means "write the initialization".
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.k_shot == 0 {
            return Err(Error::Config("k_shot must be at least 1".into()));
        }
        self.model.validate()
    }

    /// The model configuration actually trained: `model` reseeded with `seed`.
    pub fn effective_model(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed,
            ..self.model.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn toml_defaults_and_rejections() {
        let c: TrainConfig = parse_config("epochs = 5\n[model]\nbranch_widths = [4, 8]\n", false).unwrap();
        assert_eq!(c.epochs, 5);
        assert_eq!(c.learning_rate, 1e-3);
        assert_eq!(c.model.branch_widths, vec![4, 8]);
        assert!(parse_config::<TrainConfig>("epoch = 5", false).is_err());
        let bad = TrainConfig { learning_rate: 0.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig { batch_size: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { k_shot: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
