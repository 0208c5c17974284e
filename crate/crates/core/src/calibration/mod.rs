//! Sequence-likelihood calibration: hinge ranking and margin losses over
//! pseudo-preference pairs, plus the distillation training loop.

pub mod distill;
pub mod losses;
pub mod score;

pub use distill::{distill_train, CalLossConfig, CalVariant, DistillConfig, DistillOutcome};
pub use losses::{margin_loss, rank_loss};
pub use score::{score, score_from_embeddings};

use crate::lm::LmError;
use crate::numerics::NumericsError;
use crate::train::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("pair set is empty")]
    EmptyPairs,
    #[error("margin variant needs a reference for pair {0}")]
    MissingReference(u64),
    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error("invalid calibration config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

pub type Result<T> = std::result::Result<T, CalibrationError>;
