//! Small autoregressive language model: token embedding, a stack of
//! causal self-attention or gated-recurrent blocks, and a tied output
//! projection producing next-token distributions.

pub mod arch;
pub mod checkpoint;
pub mod forward;
pub mod generate;
pub mod model;
pub mod vocab;

pub use arch::{ArchConfig, PositionalScheme};
pub use forward::{ModelVars, WeightVar};
pub use generate::{
    greedy_decode, hidden_embeddings, next_token_distribution, sample, sequence_log_likelihood,
    Role, TokenSequence,
};
pub use model::{AttentionParams, BlockParams, LanguageModel, ModelParams, RecurrentParams};
pub use vocab::Vocabulary;

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum LmError {
    #[error("context of {needed} tokens exceeds the model maximum of {max}")]
    ContextOverflow { needed: usize, max: usize },
    #[error("sequence must be non-empty")]
    EmptySequence,
    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("special tokens must be distinct and in range")]
    BadSpecialTokens,
    #[error("duplicate token {0:?} in vocabulary")]
    DuplicateToken(String),
    #[error("invalid architecture: {0}")]
    BadArch(String),
    #[error("numerics failure: {0}")]
    Numerics(#[from] NumericsError),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

pub type Result<T> = std::result::Result<T, LmError>;
