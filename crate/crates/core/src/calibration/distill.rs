//! Distillation on pseudo-preference pairs: mini-batch descent on the
//! selected calibration loss, with sequence likelihoods differentiated
//! through the student and score terms held constant per batch.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lm::forward::seq_log_prob_var;
use crate::lm::{LanguageModel, TokenSequence};
use crate::numerics::Tape;
use crate::parallel;
use crate::preference::PreferencePair;
use crate::train::optim::{scheduled_lr, Adam};
use crate::train::sft::example_rng;
use crate::train::{Trainee, TrainConfig};

use super::score::score;
use super::{CalibrationError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalVariant {
    Rank,
    Margin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalLossConfig {
    pub variant: CalVariant,
    /// Margin scalar β.
    pub beta: f64,
    /// Highest n-gram order of the score function.
    pub n_max: usize,
    pub length_normalize: bool,
    /// Score embeddings from the initial student instead of the evolving
    /// one.
    pub freeze_score_embeddings: bool,
}

impl Default for CalLossConfig {
    fn default() -> Self {
        Self {
            variant: CalVariant::Rank,
            beta: 1.0,
            n_max: 2,
            length_normalize: true,
            freeze_score_embeddings: false,
        }
    }
}

impl CalLossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 {
            return Err(CalibrationError::BadConfig(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if self.n_max == 0 {
            return Err(CalibrationError::BadConfig("n_max must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub train: TrainConfig,
    pub cal: CalLossConfig,
}

/// Per-step log row (written out as CSV).
#[derive(Clone, Debug, PartialEq)]
pub struct DistillStepRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    /// Batch mean of logp₊ − logp₋.
    pub mean_gap: f64,
    pub hinge_active_fraction: f64,
}

pub struct DistillOutcome {
    pub model: LanguageModel,
    pub log: Vec<DistillStepRow>,
    /// mean(logp₊ − logp₋) over every training pair before the first and
    /// after the last update.
    pub initial_mean_gap: f64,
    pub final_mean_gap: f64,
}

struct TokenizedPair {
    id: u64,
    x: Vec<u32>,
    y_plus: Vec<u32>,
    y_minus: Vec<u32>,
    reference: Option<Vec<u32>>,
}

/// Calibration distillation over preference pairs. For the margin
/// variant every pair id must resolve in `references` (target text per
/// example id).
pub fn distill_train(
    student: LanguageModel,
    pairs: &[PreferencePair],
    references: &BTreeMap<u64, String>,
    cfg: &DistillConfig,
) -> Result<DistillOutcome> {
    cfg.train.validate()?;
    cfg.cal.validate()?;
    if pairs.is_empty() {
        return Err(CalibrationError::EmptyPairs);
    }
    let tokenized = tokenize_pairs(&student, pairs, references, cfg.cal.variant)?;

    let frozen_scores = if cfg.cal.variant == CalVariant::Margin && cfg.cal.freeze_score_embeddings
    {
        Some(compute_scores(&student, &tokenized, cfg.cal.n_max)?)
    } else {
        None
    };

    let mut trainee = Trainee::from_config(student, &cfg.train)?;
    let initial_mean_gap = mean_gap(&trainee.current_model(), &tokenized, cfg.cal.length_normalize)?;

    let mut opt = Adam::new(&trainee.trainable_sizes());
    let steps_per_epoch = tokenized.len().div_ceil(cfg.train.batch_size);
    let total_steps = cfg.train.epochs * steps_per_epoch;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut log = Vec::with_capacity(total_steps);
    let mut step = 0usize;
    for _epoch in 0..cfg.train.epochs {
        let mut order: Vec<usize> = (0..tokenized.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.train.batch_size) {
            let batch: Vec<&TokenizedPair> = chunk.iter().map(|&i| &tokenized[i]).collect();
            let margins = batch_margins(&batch, chunk, &trainee, cfg, frozen_scores.as_deref())?;
            let per_pair = parallel::map_indexed(&batch, |bi, pair| {
                pair_pass(&trainee, pair, margins[bi], cfg, step, bi)
            });
            let mut grads: Option<Vec<Vec<f64>>> = None;
            let mut loss_total = 0.0;
            let mut gap_total = 0.0;
            let mut active = 0usize;
            for r in per_pair {
                let pass = r?;
                loss_total += pass.loss;
                gap_total += pass.gap;
                active += usize::from(pass.hinge_active);
                match &mut grads {
                    None => grads = Some(pass.grads),
                    Some(acc) => {
                        for (slot, g) in acc.iter_mut().zip(pass.grads) {
                            for (s, v) in slot.iter_mut().zip(g) {
                                *s += v;
                            }
                        }
                    }
                }
            }
            let n = batch.len() as f64;
            let loss = loss_total / n;
            if !loss.is_finite() {
                return Err(CalibrationError::Diverged { step, loss });
            }
            let mut grads = grads.expect("non-empty batch");
            for g in &mut grads {
                for v in g.iter_mut() {
                    *v /= n;
                }
            }
            let lr = scheduled_lr(cfg.train.learning_rate, cfg.train.schedule, step, total_steps);
            opt.step(&mut trainee.trainable_tensors_mut(), &grads, lr);
            log.push(DistillStepRow {
                step,
                loss,
                lr,
                mean_gap: gap_total / n,
                hinge_active_fraction: active as f64 / n,
            });
            step += 1;
        }
    }
    let model = trainee.finish();
    let final_mean_gap = mean_gap(&model, &tokenized, cfg.cal.length_normalize)?;
    Ok(DistillOutcome {
        model,
        log,
        initial_mean_gap,
        final_mean_gap,
    })
}

fn tokenize_pairs(
    student: &LanguageModel,
    pairs: &[PreferencePair],
    references: &BTreeMap<u64, String>,
    variant: CalVariant,
) -> Result<Vec<TokenizedPair>> {
    pairs
        .iter()
        .map(|p| {
            let reference = match references.get(&p.example_id) {
                Some(text) => Some(student.vocab.encode(text)?),
                None if variant == CalVariant::Margin => {
                    return Err(CalibrationError::MissingReference(p.example_id));
                }
                None => None,
            };
            Ok(TokenizedPair {
                id: p.example_id,
                x: student.vocab.encode(&p.prompt)?,
                y_plus: student.vocab.encode(&p.chosen)?,
                y_minus: student.vocab.encode(&p.rejected)?,
                reference,
            })
        })
        .collect()
}

/// Constant hinge offset per pair: β for the rank variant,
/// β·(s₊ − s₋) for the margin variant.
fn batch_margins(
    batch: &[&TokenizedPair],
    chunk: &[usize],
    trainee: &Trainee,
    cfg: &DistillConfig,
    frozen: Option<&[(f64, f64)]>,
) -> Result<Vec<f64>> {
    match cfg.cal.variant {
        CalVariant::Rank => Ok(vec![cfg.cal.beta; batch.len()]),
        CalVariant::Margin => {
            if let Some(all) = frozen {
                return Ok(chunk
                    .iter()
                    .map(|&i| {
                        let (sp, sm) = all[i];
                        cfg.cal.beta * (sp - sm)
                    })
                    .collect());
            }
            let snapshot = trainee.current_model();
            let scores = parallel::map_indexed(batch, |_, pair| {
                pair_scores(&snapshot, pair, cfg.cal.n_max)
            });
            scores
                .into_iter()
                .map(|r| r.map(|(sp, sm)| cfg.cal.beta * (sp - sm)))
                .collect()
        }
    }
}

fn compute_scores(
    model: &LanguageModel,
    pairs: &[TokenizedPair],
    n_max: usize,
) -> Result<Vec<(f64, f64)>> {
    parallel::map_indexed(pairs, |_, pair| pair_scores(model, pair, n_max))
        .into_iter()
        .collect()
}

fn pair_scores(model: &LanguageModel, pair: &TokenizedPair, n_max: usize) -> Result<(f64, f64)> {
    let reference = pair
        .reference
        .as_ref()
        .ok_or(CalibrationError::MissingReference(pair.id))?;
    let x = TokenSequence::prompt(pair.x.clone());
    let refr = TokenSequence::output(reference.clone());
    let s_plus = score(
        &TokenSequence::output(pair.y_plus.clone()),
        &refr,
        &x,
        model,
        n_max,
    )?;
    let s_minus = score(
        &TokenSequence::output(pair.y_minus.clone()),
        &refr,
        &x,
        model,
        n_max,
    )?;
    Ok((s_plus, s_minus))
}

struct PairPass {
    grads: Vec<Vec<f64>>,
    loss: f64,
    gap: f64,
    hinge_active: bool,
}

fn pair_pass(
    trainee: &Trainee,
    pair: &TokenizedPair,
    margin: f64,
    cfg: &DistillConfig,
    step: usize,
    batch_index: usize,
) -> Result<PairPass> {
    let mut tape: Tape = Tape::new();
    let leaves = trainee.insert_leaves(&mut tape);
    let arch = trainee.base().arch().clone();
    let bos = trainee.base().vocab.bos();
    let mut rng = example_rng(cfg.train.seed ^ 0xca1b, step, batch_index);
    let t_plus = 1 + pair.x.len() + pair.y_plus.len();
    let vars_plus = leaves.view(&mut tape, t_plus, Some(&mut rng));
    let lp_plus = seq_log_prob_var(
        &mut tape,
        &vars_plus,
        &arch,
        &pair.x,
        &pair.y_plus,
        bos,
        cfg.cal.length_normalize,
    )?;
    let t_minus = 1 + pair.x.len() + pair.y_minus.len();
    let vars_minus = leaves.view(&mut tape, t_minus, Some(&mut rng));
    let lp_minus = seq_log_prob_var(
        &mut tape,
        &vars_minus,
        &arch,
        &pair.x,
        &pair.y_minus,
        bos,
        cfg.cal.length_normalize,
    )?;
    let margin_leaf = tape.leaf_scalar(margin);
    let diff = tape.sub(lp_minus, lp_plus)?;
    let pre_hinge = tape.add(margin_leaf, diff)?;
    let loss = tape.relu(pre_hinge);
    tape.backward(loss)?;
    let gap = tape.scalar_value(lp_plus) - tape.scalar_value(lp_minus);
    let loss_value = tape.scalar_value(loss);
    Ok(PairPass {
        grads: leaves.grads(&tape),
        loss: loss_value,
        gap,
        hinge_active: loss_value > 0.0,
    })
}

/// Margins the loss would use at this point: β for the rank variant,
/// β·(s₊ − s₋) with scores from this exact model for the margin variant.
pub fn batch_margins_at(
    student: &LanguageModel,
    pairs: &[PreferencePair],
    references: &BTreeMap<u64, String>,
    cfg: &DistillConfig,
) -> Result<Vec<f64>> {
    let tokenized = tokenize_pairs(student, pairs, references, cfg.cal.variant)?;
    match cfg.cal.variant {
        CalVariant::Rank => Ok(vec![cfg.cal.beta; tokenized.len()]),
        CalVariant::Margin => compute_scores(student, &tokenized, cfg.cal.n_max).map(|scores| {
            scores
                .into_iter()
                .map(|(sp, sm)| cfg.cal.beta * (sp - sm))
                .collect()
        }),
    }
}

/// Batched calibration loss at fixed margins (scores detached), without
/// touching the optimizer. Returns the mean loss value.
pub fn batch_loss_value(
    student: &LanguageModel,
    pairs: &[PreferencePair],
    references: &BTreeMap<u64, String>,
    cfg: &DistillConfig,
    margins: &[f64],
) -> Result<f64> {
    let tokenized = tokenize_pairs(student, pairs, references, cfg.cal.variant)?;
    let mut total = 0.0;
    for (pair, &margin) in tokenized.iter().zip(margins) {
        let x = TokenSequence::prompt(pair.x.clone());
        let lp = crate::lm::sequence_log_likelihood(
            student,
            &x,
            &TokenSequence::output(pair.y_plus.clone()),
            cfg.cal.length_normalize,
        )?;
        let lm = crate::lm::sequence_log_likelihood(
            student,
            &x,
            &TokenSequence::output(pair.y_minus.clone()),
            cfg.cal.length_normalize,
        )?;
        total += (margin - lp + lm).max(0.0);
    }
    Ok(total / tokenized.len() as f64)
}

/// Batched calibration loss and its gradient w.r.t. every student
/// parameter, at fixed margins. Gradients follow the canonical order of
/// [`crate::lm::ModelParams::named_params`].
pub fn batch_loss_grads(
    student: &LanguageModel,
    pairs: &[PreferencePair],
    references: &BTreeMap<u64, String>,
    cfg: &DistillConfig,
    margins: &[f64],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let tokenized = tokenize_pairs(student, pairs, references, cfg.cal.variant)?;
    let trainee = Trainee::Full(student.clone());
    let per_pair = parallel::map_indexed(&tokenized, |i, pair| {
        pair_pass(&trainee, pair, margins[i], cfg, 0, i)
    });
    let mut grads: Option<Vec<Vec<f64>>> = None;
    let mut total = 0.0;
    for r in per_pair {
        let pass = r?;
        total += pass.loss;
        match &mut grads {
            None => grads = Some(pass.grads),
            Some(acc) => {
                for (slot, g) in acc.iter_mut().zip(pass.grads) {
                    for (s, v) in slot.iter_mut().zip(g) {
                        *s += v;
                    }
                }
            }
        }
    }
    let n = tokenized.len() as f64;
    let mut grads = grads.expect("non-empty pairs");
    for g in &mut grads {
        for v in g.iter_mut() {
            *v /= n;
        }
    }
    Ok((total / n, grads))
}

/// mean(logp₊ − logp₋) over every pair under a fixed model.
fn mean_gap(
    model: &LanguageModel,
    pairs: &[TokenizedPair],
    length_normalize: bool,
) -> Result<f64> {
    let gaps = parallel::map_indexed(pairs, |_, pair| -> Result<f64> {
        let x = TokenSequence::prompt(pair.x.clone());
        let plus = crate::lm::sequence_log_likelihood(
            model,
            &x,
            &TokenSequence::output(pair.y_plus.clone()),
            length_normalize,
        )?;
        let minus = crate::lm::sequence_log_likelihood(
            model,
            &x,
            &TokenSequence::output(pair.y_minus.clone()),
            length_normalize,
        )?;
        Ok(plus - minus)
    });
    let mut total = 0.0;
    for g in gaps {
        total += g?;
    }
    Ok(total / pairs.len() as f64)
}
