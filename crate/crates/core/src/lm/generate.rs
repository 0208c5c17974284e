//! Decoding, sequence likelihood, and token-level hidden embeddings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numerics::{kernels, ops, Tape};

use super::forward::{self, ModelVars};
use super::model::LanguageModel;
use super::{LmError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Prompt,
    Output,
}

/// A token id sequence. Output sequences never contain BOS; their length
/// (EOS included when present) is the L_y used by length normalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub role: Role,
}

impl TokenSequence {
    pub fn prompt(ids: Vec<u32>) -> Self {
        Self {
            ids,
            role: Role::Prompt,
        }
    }

    pub fn output(ids: Vec<u32>) -> Self {
        Self {
            ids,
            role: Role::Output,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn check_in_vocab(&self, vocab_size: usize) -> Result<()> {
        for &id in &self.ids {
            if id as usize >= vocab_size {
                return Err(LmError::TokenOutOfRange {
                    id,
                    size: vocab_size,
                });
            }
        }
        Ok(())
    }
}

fn context_ids(model: &LanguageModel, x: &[u32], prefix: &[u32]) -> Result<Vec<u32>> {
    let needed = 1 + x.len() + prefix.len();
    if needed > model.max_len() {
        return Err(LmError::ContextOverflow {
            needed,
            max: model.max_len(),
        });
    }
    let mut ids = Vec::with_capacity(needed);
    ids.push(model.vocab.bos());
    ids.extend_from_slice(x);
    ids.extend_from_slice(prefix);
    Ok(ids)
}

/// Logits of the next token after (BOS, x, prefix).
fn last_logits(model: &LanguageModel, ids: &[u32]) -> Result<Vec<f64>> {
    let mut tape: Tape = Tape::new();
    let vars = ModelVars::insert(&mut tape, &model.params);
    let logits = forward::forward_logits(&mut tape, &vars, model.arch(), ids)?;
    let m = model.vocab.size();
    let t = ids.len();
    let row = tape.value(logits)[(t - 1) * m..t * m].to_vec();
    if !row.iter().all(|v| v.is_finite()) {
        return Err(LmError::Numerics(crate::numerics::NumericsError::NonFinite(
            "forward logits",
        )));
    }
    Ok(row)
}

/// Next-token probability vector over the whole vocabulary, conditioned
/// on the concatenated (x, prefix) at temperature `gamma`.
pub fn next_token_distribution(
    model: &LanguageModel,
    x: &TokenSequence,
    prefix: &TokenSequence,
    gamma: f64,
) -> Result<Vec<f64>> {
    let ids = context_ids(model, &x.ids, &prefix.ids)?;
    let logits = last_logits(model, &ids)?;
    let z = crate::numerics::Tensor::new(vec![logits.len()], logits)
        .map_err(LmError::Numerics)?;
    let p = ops::softmax_temperature(&z, gamma)?;
    Ok(p.data().to_vec())
}

/// Σ_n log p(y_n | x, y_<n), the EOS term included when `y` ends with
/// one; divided by L_y (EOS counted) when `length_normalize` is set.
/// Sequences truncated at max_len carry no EOS factor.
pub fn sequence_log_likelihood(
    model: &LanguageModel,
    x: &TokenSequence,
    y: &TokenSequence,
    length_normalize: bool,
) -> Result<f64> {
    if y.is_empty() {
        return Err(LmError::EmptySequence);
    }
    let mut tape: Tape = Tape::new();
    let vars = ModelVars::insert(&mut tape, &model.params);
    let lp = forward::seq_log_prob_var(
        &mut tape,
        &vars,
        model.arch(),
        &x.ids,
        &y.ids,
        model.vocab.bos(),
        length_normalize,
    )?;
    Ok(tape.scalar_value(lp))
}

/// Ancestral sampling at temperature `gamma`; stops at EOS or after
/// `max_new` tokens (sooner if the context window fills). Deterministic
/// for a fixed seed.
pub fn sample(
    model: &LanguageModel,
    x: &TokenSequence,
    gamma: f64,
    max_new: usize,
    seed: u64,
) -> Result<TokenSequence> {
    if gamma <= 0.0 {
        return Err(LmError::Numerics(
            crate::numerics::NumericsError::InvalidTemperature(gamma),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let room = model.max_len().saturating_sub(1 + x.ids.len());
    if room == 0 {
        return Err(LmError::ContextOverflow {
            needed: 2 + x.ids.len(),
            max: model.max_len(),
        });
    }
    let cap = max_new.min(room);
    let mut out = Vec::new();
    for _ in 0..cap {
        let ids = context_ids(model, &x.ids, &out)?;
        let logits = last_logits(model, &ids)?;
        let probs = kernels::softmax_rows(&logits, 1, logits.len(), gamma);
        let tok = draw_categorical(&probs, rng.gen::<f64>());
        out.push(tok as u32);
        if tok as u32 == model.vocab.eos() {
            break;
        }
    }
    Ok(TokenSequence::output(out))
}

/// Cumulative-scan draw; deterministic given the uniform variate.
fn draw_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Argmax decoding with first-index tie-break; stops at EOS or after
/// `max_new` tokens.
pub fn greedy_decode(
    model: &LanguageModel,
    x: &TokenSequence,
    max_new: usize,
) -> Result<TokenSequence> {
    let room = model.max_len().saturating_sub(1 + x.ids.len());
    if room == 0 {
        return Err(LmError::ContextOverflow {
            needed: 2 + x.ids.len(),
            max: model.max_len(),
        });
    }
    let cap = max_new.min(room);
    let mut out = Vec::new();
    for _ in 0..cap {
        let ids = context_ids(model, &x.ids, &out)?;
        let logits = last_logits(model, &ids)?;
        let tok = ops::argmax(&logits) as u32;
        out.push(tok);
        if tok == model.vocab.eos() {
            break;
        }
    }
    Ok(TokenSequence::output(out))
}

/// L2-normalized final-layer hidden state for each token of `seq`,
/// conditioned on `context` prepended. One vector per token of `seq`.
pub fn hidden_embeddings(
    model: &LanguageModel,
    seq: &TokenSequence,
    context: &TokenSequence,
) -> Result<Vec<Vec<f64>>> {
    if seq.is_empty() {
        return Err(LmError::EmptySequence);
    }
    let ids = context_ids(model, &context.ids, &seq.ids)?;
    let mut tape: Tape = Tape::new();
    let vars = ModelVars::insert(&mut tape, &model.params);
    let hidden = forward::forward_hidden(&mut tape, &vars, model.arch(), &ids)?;
    let d = model.arch().model_width;
    let values = tape.value(hidden);
    let offset = 1 + context.ids.len();
    let mut out = Vec::with_capacity(seq.len());
    for n in 0..seq.len() {
        let row = &values[(offset + n) * d..(offset + n + 1) * d];
        let norm = kernels::l2_norm(row);
        if norm > 1e-30 {
            out.push(row.iter().map(|v| v / norm).collect());
        } else {
            out.push(row.to_vec());
        }
    }
    Ok(out)
}
