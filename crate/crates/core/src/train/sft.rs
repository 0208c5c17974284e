//! Supervised fine-tuning: token-level negative log-likelihood on
//! labeled (prompt, target) pairs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lm::forward::seq_log_prob_var;
use crate::lm::LanguageModel;
use crate::numerics::Tape;
use crate::parallel;

use super::config::TrainConfig;
use super::optim::{scheduled_lr, Adam};
use super::trainee::Trainee;
use super::{Result, StepMetric, TrainError, TrainLog};

/// One labeled example; `y` carries its EOS terminator.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub id: u64,
    pub x: Vec<u32>,
    pub y: Vec<u32>,
}

/// Deterministic per-example RNG stream for dropout masks.
pub(crate) fn example_rng(seed: u64, step: usize, index: usize) -> ChaCha8Rng {
    let mix = seed
        ^ (step as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (index as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    ChaCha8Rng::seed_from_u64(mix)
}

/// Minimizes mean token-level NLL of the targets. Returns the trained
/// model and the per-step loss/lr log.
pub fn sft_train(
    model: LanguageModel,
    dataset: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(LanguageModel, TrainLog)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut trainee = Trainee::from_config(model, cfg)?;
    let mut opt = Adam::new(&trainee.trainable_sizes());
    let steps_per_epoch = dataset.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(total_steps);
    let mut step = 0usize;
    for _epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledExample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let per_example = parallel::map_indexed(&batch, |bi, ex| {
                example_pass(&trainee, ex, cfg, step, bi)
            });
            let mut grads: Option<Vec<Vec<f64>>> = None;
            let mut nll_total = 0.0;
            let mut tokens_total = 0usize;
            for r in per_example {
                let pass = r?;
                nll_total += pass.nll_sum;
                tokens_total += pass.n_tokens;
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
            let loss = nll_total / tokens_total as f64;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { step, loss });
            }
            let mut grads = grads.expect("non-empty batch");
            for g in &mut grads {
                for v in g.iter_mut() {
                    *v /= tokens_total as f64;
                }
            }
            let lr = scheduled_lr(cfg.learning_rate, cfg.schedule, step, total_steps);
            opt.step(&mut trainee.trainable_tensors_mut(), &grads, lr);
            log.push(StepMetric { step, loss, lr });
            step += 1;
        }
    }
    Ok((trainee.finish(), log))
}

struct ExamplePass {
    grads: Vec<Vec<f64>>,
    nll_sum: f64,
    n_tokens: usize,
}

fn example_pass(
    trainee: &Trainee,
    ex: &LabeledExample,
    cfg: &TrainConfig,
    step: usize,
    batch_index: usize,
) -> Result<ExamplePass> {
    if ex.y.is_empty() {
        return Err(TrainError::Lm(crate::lm::LmError::EmptySequence));
    }
    let mut tape: Tape = Tape::new();
    let leaves = trainee.insert_leaves(&mut tape);
    let t = 1 + ex.x.len() + ex.y.len();
    let mut rng = example_rng(cfg.seed, step, batch_index);
    let vars = leaves.view(&mut tape, t, Some(&mut rng));
    let logp = seq_log_prob_var(
        &mut tape,
        &vars,
        trainee.base().arch(),
        &ex.x,
        &ex.y,
        trainee.base().vocab.bos(),
        false,
    )?;
    let nll = tape.scale(logp, -1.0);
    tape.backward(nll)?;
    Ok(ExamplePass {
        grads: leaves.grads(&tape),
        nll_sum: tape.scalar_value(nll),
        n_tokens: ex.y.len(),
    })
}

/// Mean per-token NLL of a dataset under a fixed model (no training).
pub fn mean_token_nll(
    model: &LanguageModel,
    dataset: &[LabeledExample],
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut nll = 0.0;
    let mut tokens = 0usize;
    for ex in dataset {
        let x = crate::lm::TokenSequence::prompt(ex.x.clone());
        let y = crate::lm::TokenSequence::output(ex.y.clone());
        nll -= crate::lm::sequence_log_likelihood(model, &x, &y, false)?;
        tokens += ex.y.len();
    }
    Ok(nll / tokens as f64)
}
