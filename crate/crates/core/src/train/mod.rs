//! Supervised fine-tuning, teacher-forcing KD baselines, and low-rank
//! adapter fine-tuning.

pub mod config;
pub mod kd;
pub mod lora;
pub mod optim;
pub mod sft;
pub mod trainee;

pub use config::{LoraConfig, LossKind, ScheduleKind, TrainConfig};
pub use kd::{seqkd_train, standard_kd_loss, standard_kd_train};
pub use lora::{apply_adapter, merge_adapter, AdaptedModel, LowRankAdapter};
pub use sft::{sft_train, LabeledExample};
pub use trainee::Trainee;

use crate::lm::LmError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("dataset must be non-empty")]
    EmptyDataset,
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("teacher and student vocabularies differ")]
    VocabMismatch,
    #[error("adapter rank {rank} exceeds min dimension {min_dim} of weight {name}")]
    RankTooLarge {
        rank: usize,
        min_dim: usize,
        name: String,
    },
    #[error("no adaptable weight named {0}")]
    NoSuchWeight(String),
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// One row of the per-step metrics log (written out as CSV).
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetric {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

pub type TrainLog = Vec<StepMetric>;
