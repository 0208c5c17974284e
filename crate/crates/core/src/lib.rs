//! Preference-based knowledge distillation for small autoregressive
//! language models, end to end on CPU: a tape autodiff engine, a small
//! LM, supervised and distillation trainers, pseudo-preference pair
//! construction, sequence-likelihood calibration losses, and an
//! evaluation harness with a synthetic oracle-rewarded task.

pub mod artifact;
pub mod calibration;
pub mod eval;
pub mod lm;
pub mod numerics;
pub mod parallel;
pub mod preference;
pub mod tasks;
pub mod train;

pub use numerics::{NumericsError, Tape, Tensor, Var};
