//! Teacher-forcing distillation baselines: word-level KD against the
//! teacher's per-token distributions, and sequence-level KD on the
//! teacher's decoded outputs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lm::forward::{forward_logits, ModelVars};
use crate::lm::{greedy_decode, LanguageModel, TokenSequence};
use crate::numerics::{kernels, Tape};
use crate::parallel;

use super::config::TrainConfig;
use super::optim::{scheduled_lr, Adam};
use super::sft::{example_rng, sft_train, LabeledExample};
use super::trainee::Trainee;
use super::{Result, StepMetric, TrainError, TrainLog};

/// KL(p‖q) over one distribution pair: Σ p_i (log p_i − log q_i).
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.ln() - qi.ln()))
        .sum()
}

/// Teacher next-token distributions (and their entropy terms) at every
/// target position, teacher-forced on the ground-truth sequence.
fn teacher_rows(teacher: &LanguageModel, ex: &LabeledExample) -> Result<(Vec<f64>, f64, usize)> {
    let mut tape: Tape = Tape::new();
    let vars = ModelVars::insert(&mut tape, &teacher.params);
    let mut ids = Vec::with_capacity(1 + ex.x.len() + ex.y.len());
    ids.push(teacher.vocab.bos());
    ids.extend_from_slice(&ex.x);
    ids.extend_from_slice(&ex.y);
    let logits = forward_logits(&mut tape, &vars, teacher.arch(), &ids)?;
    let m = teacher.vocab.size();
    let t = ids.len();
    let all = tape.value(logits);
    let n_pos = ex.y.len();
    let offset = ex.x.len(); // row r predicts ids[r+1]
    let mut probs = Vec::with_capacity(n_pos * m);
    let mut entropy_term = 0.0;
    for r in offset..offset + n_pos {
        let row = &all[r * m..(r + 1) * m];
        let p = kernels::softmax_rows(row, 1, m, 1.0);
        let logp = kernels::log_softmax_rows(row, 1, m, 1.0);
        for i in 0..m {
            entropy_term += p[i] * logp[i];
        }
        probs.extend_from_slice(&p);
    }
    let _ = t;
    Ok((probs, entropy_term, n_pos))
}

/// Word-level KD objective value: mean over target positions of
/// KL(teacher‖student) with teacher-forced contexts from the targets.
pub fn standard_kd_loss(
    teacher: &LanguageModel,
    student: &LanguageModel,
    batch: &[LabeledExample],
) -> Result<f64> {
    if !teacher.same_vocab(student) {
        return Err(TrainError::VocabMismatch);
    }
    if batch.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let m = teacher.vocab.size();
    let mut total = 0.0;
    let mut positions = 0usize;
    for ex in batch {
        let (t_probs, _t_ent, n_pos) = teacher_rows(teacher, ex)?;
        let (s_probs, _s_ent, s_pos) = teacher_rows(student, ex)?;
        debug_assert_eq!(n_pos, s_pos);
        for r in 0..n_pos {
            total += kl_divergence(&t_probs[r * m..(r + 1) * m], &s_probs[r * m..(r + 1) * m]);
        }
        positions += n_pos;
    }
    Ok(total / positions as f64)
}

/// Trains the student to match the teacher's per-token distributions on
/// the dataset's target contexts (Adam on mean positional KL).
pub fn standard_kd_train(
    teacher: &LanguageModel,
    student: LanguageModel,
    dataset: &[LabeledExample],
    cfg: &TrainConfig,
) -> Result<(LanguageModel, TrainLog)> {
    cfg.validate()?;
    if !teacher.same_vocab(&student) {
        return Err(TrainError::VocabMismatch);
    }
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut trainee = Trainee::from_config(student, cfg)?;
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
                kd_example_pass(teacher, &trainee, ex, cfg, step, bi)
            });
            let mut grads: Option<Vec<Vec<f64>>> = None;
            let mut kl_total = 0.0;
            let mut positions = 0usize;
            for r in per_example {
                let pass = r?;
                kl_total += pass.kl_sum;
                positions += pass.n_positions;
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
            let loss = kl_total / positions as f64;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { step, loss });
            }
            let mut grads = grads.expect("non-empty batch");
            for g in &mut grads {
                for v in g.iter_mut() {
                    *v /= positions as f64;
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

struct KdPass {
    grads: Vec<Vec<f64>>,
    kl_sum: f64,
    n_positions: usize,
}

fn kd_example_pass(
    teacher: &LanguageModel,
    trainee: &Trainee,
    ex: &LabeledExample,
    cfg: &TrainConfig,
    step: usize,
    batch_index: usize,
) -> Result<KdPass> {
    let (t_probs, t_entropy, n_pos) = teacher_rows(teacher, ex)?;
    let m = teacher.vocab.size();

    let mut tape: Tape = Tape::new();
    let leaves = trainee.insert_leaves(&mut tape);
    let t = 1 + ex.x.len() + ex.y.len();
    let mut rng = example_rng(cfg.seed, step, batch_index);
    let vars = leaves.view(&mut tape, t, Some(&mut rng));
    let mut ids = Vec::with_capacity(t);
    ids.push(trainee.base().vocab.bos());
    ids.extend_from_slice(&ex.x);
    ids.extend_from_slice(&ex.y);
    let logits = forward_logits(&mut tape, &vars, trainee.base().arch(), &ids)?;
    let logq = tape.row_log_softmax(logits, 1.0)?;
    let rows = tape.slice_rows(logq, ex.x.len(), n_pos)?;
    let p_leaf = tape.leaf_raw(vec![n_pos, m], t_probs);
    let weighted = tape.mul(p_leaf, rows)?;
    let cross = tape.sum(weighted);
    let ent_leaf = tape.leaf_scalar(t_entropy);
    let kl_sum = tape.sub(ent_leaf, cross)?;
    tape.backward(kl_sum)?;
    Ok(KdPass {
        grads: leaves.grads(&tape),
        kl_sum: tape.scalar_value(kl_sum),
        n_positions: n_pos,
    })
}

/// Sequence-level KD: greedy-decode the teacher on each prompt, then run
/// supervised fine-tuning on the (prompt, teacher output) pairs. Zero
/// prompts is a no-op by definition.
pub fn seqkd_train(
    teacher: &LanguageModel,
    student: LanguageModel,
    prompts: &[(u64, Vec<u32>)],
    max_new: usize,
    cfg: &TrainConfig,
) -> Result<(LanguageModel, TrainLog)> {
    if !teacher.same_vocab(&student) {
        return Err(TrainError::VocabMismatch);
    }
    if prompts.is_empty() {
        return Ok((student, Vec::new()));
    }
    let decoded = parallel::map_indexed(prompts, |_, (id, ids)| {
        let x = TokenSequence::prompt(ids.clone());
        greedy_decode(teacher, &x, max_new).map(|y| LabeledExample {
            id: *id,
            x: ids.clone(),
            y: y.ids,
        })
    });
    let mut dataset = Vec::with_capacity(prompts.len());
    for d in decoded {
        let ex = d?;
        if !ex.y.is_empty() {
            dataset.push(ex);
        }
    }
    if dataset.is_empty() {
        return Ok((student, Vec::new()));
    }
    sft_train(student, &dataset, cfg)
}
