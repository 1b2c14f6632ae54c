// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::UpsampleMode;

/// Architecture and stochasticity settings of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Channel width of each pyramid level, finest (stride 4) first.
    pub branch_widths: Vec<usize>,
    /// Bottleneck width of the squeeze-and-attention branch.
    #[serde(default = "default_sa_channels")]
    pub sa_channels: usize,
    /// Squash the fusion gate through a sigmoid.
    #[serde(default = "default_gate")]
    pub gate_nonlinearity: bool,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    /// Interpolation used for cross-resolution exchange and fusion gates.
    #[serde(default)]
    pub upsample_mode: UpsampleMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_sa_channels() -> usize {
    8
}

fn default_gate() -> bool {
    true
}

fn default_dropout() -> f64 {
    0.1
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            branch_widths: vec![8, 16, 32],
            sa_channels: default_sa_channels(),
            gate_nonlinearity: true,
            dropout_rate: default_dropout(),
            upsample_mode: UpsampleMode::Bilinear,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_widths(widths: &[usize]) -> Self {
        ModelConfig {
            branch_widths: widths.to_vec(),
            ..Default::default()
        }
    }

    pub fn num_levels(&self) -> usize {
        self.branch_widths.len()
    }

    /// Downsampling factor of each pyramid level: 4, 8, 16.
    pub fn strides(&self) -> Vec<usize> {
        (0..self.num_levels()).map(|i| 4 << i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.branch_widths.len()) {
            return Err(Error::Config(format!(
                "branch_widths must list 2 or 3 levels, got {}",
                self.branch_widths.len()
            )));
        }
        if let Some(i) = self.branch_widths.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("branch width {i} is zero")));
        }
        if self.sa_channels == 0 {
            return Err(Error::Config("sa_channels must be positive".into()));
        }
        if !self.dropout_rate.is_finite() || !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::with_widths(&[0, 16]).validate().is_err());
        assert!(ModelConfig::with_widths(&[8]).validate().is_err());
        assert!(ModelConfig::with_widths(&[8, 8, 8, 8]).validate().is_err());
        let mut c = ModelConfig { dropout_rate: 1.0, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.dropout_rate = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn parses_toml_and_json_with_defaults() {
        let t: ModelConfig = parse_config(
            "branch_widths = [8, 16]\nupsample_mode = \"nearest\"\nseed = 3\n",
            false,
        )
        .unwrap();
        assert_eq!(t.branch_widths, vec![8, 16]);
        assert_eq!(t.upsample_mode, UpsampleMode::Nearest);
        assert_eq!(t.dropout_rate, 0.1);
        assert!(t.gate_nonlinearity);
        let j: ModelConfig =
            parse_config(r#"{"branch_widths":[4,8,16],"sa_channels":2,"gate_nonlinearity":false}"#, true)
                .unwrap();
        assert_eq!(j.sa_channels, 2);
        assert!(!j.gate_nonlinearity);
        assert!(parse_config::<ModelConfig>("branch_widths = [8]\nbogus = 1\n", false).is_err());
    }
}
