//! Architecture descriptors.

use serde::{Deserialize, Serialize};

use super::{LmError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionalScheme {
    /// Trained position embedding table.
    Learned,
    /// Fixed sin/cos table.
    Sinusoidal,
    /// No positional signal (recurrent blocks carry order themselves).
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub n_layers: usize,
    pub model_width: usize,
    /// Attention heads per block; 0 selects gated-recurrent blocks.
    pub n_heads: usize,
    /// Maximum total context length (BOS + prompt + output).
    pub max_len: usize,
    pub positional: PositionalScheme,
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(LmError::BadArch("n_layers must be >= 1".into()));
        }
        if self.model_width == 0 {
            return Err(LmError::BadArch("model_width must be >= 1".into()));
        }
        if self.n_heads > 0 && self.model_width % self.n_heads != 0 {
            return Err(LmError::BadArch(format!(
                "model_width {} not divisible by n_heads {}",
                self.model_width, self.n_heads
            )));
        }
        if self.max_len < 2 {
            return Err(LmError::BadArch("max_len must be >= 2".into()));
        }
        Ok(())
    }

    pub fn uses_attention(&self) -> bool {
        self.n_heads > 0
    }

    /// MLP hidden width (2× the model width).
    pub fn hidden_width(&self) -> usize {
        2 * self.model_width
    }

    /// Paper-scale capacity gap, desk-sized: 4 blocks at width 64.
    pub fn default_teacher() -> Self {
        Self {
            n_layers: 4,
            model_width: 64,
            n_heads: 4,
            max_len: 48,
            positional: PositionalScheme::Learned,
        }
    }

    /// 2 blocks at width 32.
    pub fn default_student() -> Self {
        Self {
            n_layers: 2,
            model_width: 32,
            n_heads: 2,
            max_len: 48,
            positional: PositionalScheme::Learned,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_must_divide_heads() {
        let mut a = ArchConfig::default_student();
        a.n_heads = 5;
        assert!(a.validate().is_err());
        a.n_heads = 0; // recurrent blocks: any width is fine
        assert!(a.validate().is_ok());
    }

    #[test]
    fn defaults_validate() {
        ArchConfig::default_teacher().validate().unwrap();
        ArchConfig::default_student().validate().unwrap();
    }
}
