//! Distillation-data scaling curves.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calibration::distill::{distill_train, DistillConfig};
use crate::lm::LanguageModel;
use crate::preference::PreferencePair;

use super::metrics::{mean, win_rate};
use super::reward::RewardModel;
use super::{EvalError, Result};

/// Everything a study needs to retrain and re-score a student.
pub struct ScalingContext<'a> {
    pub student: &'a LanguageModel,
    pub references: &'a std::collections::BTreeMap<u64, String>,
    pub cfg: &'a DistillConfig,
    pub eval_prompts: &'a [String],
    pub eval_targets: &'a [String],
    pub reward: &'a dyn RewardModel,
    pub max_new: usize,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalingPoint {
    pub fraction: f64,
    pub mean_win_rate: f64,
    pub per_seed: Vec<f64>,
}

/// Trains a fresh student copy per (fraction, seed) on a seeded
/// prefix-shuffled subset of the pairs and reports seed-averaged test
/// win rates. Fractions must be ascending and in (0, 1].
pub fn scaling_curve(
    pairs: &[PreferencePair],
    fractions: &[f64],
    ctx: &ScalingContext<'_>,
    seeds: &[u64],
) -> Result<Vec<ScalingPoint>> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    for w in fractions.windows(2) {
        if w[1] < w[0] {
            return Err(EvalError::Pipeline(format!(
                "fractions must be ascending, got {} before {}",
                w[0], w[1]
            )));
        }
    }
    let mut out = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(EvalError::BadFraction(fraction));
        }
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut shuffled: Vec<PreferencePair> = pairs.to_vec();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let take = ((fraction * pairs.len() as f64).floor() as usize).max(1);
            let subset = &shuffled[..take.min(shuffled.len())];
            let mut cfg = ctx.cfg.clone();
            cfg.train.seed = seed;
            let outcome = distill_train(ctx.student.clone(), subset, ctx.references, &cfg)
                .map_err(|e| EvalError::Pipeline(format!("distill at fraction {fraction}: {e}")))?;
            let wr = eval_win_rate(&outcome.model, ctx)?;
            per_seed.push(wr);
        }
        out.push(ScalingPoint {
            fraction,
            mean_win_rate: mean(&per_seed),
            per_seed,
        });
    }
    Ok(out)
}

fn eval_win_rate(model: &LanguageModel, ctx: &ScalingContext<'_>) -> Result<f64> {
    let outputs = crate::parallel::map_indexed(ctx.eval_prompts, |_, prompt| {
        let ids = model.vocab.encode(prompt).map_err(|e| e.to_string())?;
        let x = crate::lm::TokenSequence::prompt(ids);
        let y = crate::lm::greedy_decode(model, &x, ctx.max_new).map_err(|e| e.to_string())?;
        model.vocab.decode_content(&y.ids).map_err(|e| e.to_string())
    })
    .into_iter()
    .collect::<std::result::Result<Vec<String>, String>>()
    .map_err(EvalError::Pipeline)?;
    win_rate(&outputs, ctx.eval_targets, ctx.eval_prompts, ctx.reward)
}
