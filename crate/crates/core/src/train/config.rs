//! Training configuration.

use serde::{Deserialize, Serialize};

use super::{Result, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Sft,
    StandardKd,
    Seqkd,
    CalRank,
    CalMargin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Learning rate decays linearly to zero over the planned steps.
    #[default]
    LinearToZero,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        Self {
            rank: 8,
            alpha: 32.0,
            dropout: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub schedule: ScheduleKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Hinge margin β for the calibration losses.
    pub beta: f64,
    /// Sampling temperature γ for generation-backed phases.
    pub gamma: f64,
    pub length_normalize: bool,
    pub lora: Option<LoraConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            schedule: ScheduleKind::LinearToZero,
            batch_size: 8,
            epochs: 1,
            seed: 0,
            loss: LossKind::Sft,
            beta: 1.0,
            gamma: 0.7,
            length_normalize: false,
            lora: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(TrainError::BadConfig(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.beta < 0.0 {
            return Err(TrainError::BadConfig(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if self.gamma <= 0.0 {
            return Err(TrainError::BadConfig(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be >= 1".into()));
        }
        if let Some(lora) = &self.lora {
            if lora.rank == 0 {
                return Err(TrainError::BadConfig("lora.rank must be >= 1".into()));
            }
            if !(0.0..1.0).contains(&lora.dropout) {
                return Err(TrainError::BadConfig(format!(
                    "lora.dropout must be in [0,1), got {}",
                    lora.dropout
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_fields_are_named() {
        let mut cfg = TrainConfig::default();
        cfg.beta = -0.5;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("beta"));
    }
}
