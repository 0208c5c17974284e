//! Evaluation harness: win rate under a pluggable reward model, ROUGE,
//! word-count statistics, length-bucketed deltas, and data-scaling
//! curves.

pub mod buckets;
pub mod metrics;
pub mod reward;
pub mod studies;

pub use buckets::{length_bucketed_delta_win_rate, BucketRow, BucketTable, DEFAULT_BUCKET_EDGES};
pub use metrics::{rouge_l, rouge_n, win_rate, word_count};
pub use reward::{Judge, Preference, RewardJudge, RewardModel};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("expected equal list lengths, got {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("evaluation over an empty set")]
    Empty,
    #[error("fractions must lie in (0, 1], got {0}")]
    BadFraction(f64),
    #[error("{0}")]
    Pipeline(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// One row of the main results table.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub win_rate_percent: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub mean_word_count: f64,
    pub n_evaluated: usize,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        let in_range = |v: f64| (0.0..=100.0).contains(&v);
        if !in_range(self.win_rate_percent)
            || !in_range(self.rouge1)
            || !in_range(self.rouge2)
            || !in_range(self.rouge_l)
        {
            return Err(EvalError::Pipeline(format!(
                "report values out of [0,100] for method {}",
                self.method
            )));
        }
        Ok(())
    }
}
