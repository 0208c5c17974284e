//! Low-rank adapters: frozen base weights plus trainable factorized
//! deltas. The effective weight is W₀ + (α/r)·A·B with A (in×r)
//! initialized small and B (r×out) initialized to zeros, so a fresh
//! adapter leaves the forward pass exactly unchanged.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::lm::{LanguageModel, ModelParams};
use crate::numerics::{kernels, Tensor};

use super::config::LoraConfig;
use super::{Result, TrainError};

#[derive(Clone, Debug, PartialEq)]
pub struct LowRankAdapter {
    /// A: in×r.
    pub down: Tensor,
    /// B: r×out.
    pub up: Tensor,
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl LowRankAdapter {
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    /// Materialized delta (α/r)·A·B, shaped like the base weight.
    pub fn delta(&self) -> Tensor {
        let (input, r) = (self.down.shape()[0], self.down.shape()[1]);
        let out = self.up.shape()[1];
        let prod = kernels::matmul(self.down.data(), self.up.data(), input, r, out);
        let s = self.scale();
        Tensor::new(vec![input, out], prod.into_iter().map(|v| v * s).collect())
            .expect("delta shape")
    }
}

/// A base model with adapters attached to a subset of its 2-D block
/// weights, keyed by canonical parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedModel {
    pub base: LanguageModel,
    pub adapters: BTreeMap<String, LowRankAdapter>,
}

/// Attach fresh adapters to every block matrix of the model. A is drawn
/// N(0, 0.02) from the seed; B starts at zero so the adapted forward
/// pass equals the base model bit for bit.
pub fn apply_adapter(model: LanguageModel, cfg: &LoraConfig, seed: u64) -> Result<AdaptedModel> {
    let targets = model.params.adaptable_weight_names();
    apply_adapter_to(model, cfg, seed, &targets)
}

/// Attach adapters to the named weights only.
pub fn apply_adapter_to(
    model: LanguageModel,
    cfg: &LoraConfig,
    seed: u64,
    targets: &[String],
) -> Result<AdaptedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: BTreeMap<String, Vec<usize>> = model
        .params
        .named_params()
        .into_iter()
        .map(|(name, t)| (name, t.shape().to_vec()))
        .collect();
    let mut adapters = BTreeMap::new();
    let mut sorted_targets: Vec<&String> = targets.iter().collect();
    sorted_targets.sort();
    for name in sorted_targets {
        let shape = shapes
            .get(name)
            .ok_or_else(|| TrainError::NoSuchWeight(name.clone()))?;
        if shape.len() != 2 {
            return Err(TrainError::NoSuchWeight(format!(
                "{name} is not a matrix weight"
            )));
        }
        let (input, out) = (shape[0], shape[1]);
        let min_dim = input.min(out);
        if cfg.rank > min_dim {
            return Err(TrainError::RankTooLarge {
                rank: cfg.rank,
                min_dim,
                name: name.clone(),
            });
        }
        adapters.insert(
            name.clone(),
            LowRankAdapter {
                down: Tensor::randn(vec![input, cfg.rank], 0.02, &mut rng),
                up: Tensor::zeros(vec![cfg.rank, out]),
                rank: cfg.rank,
                alpha: cfg.alpha,
                dropout: cfg.dropout,
            },
        );
    }
    Ok(AdaptedModel {
        base: model,
        adapters,
    })
}

/// Fold every adapter delta into its base weight and return the plain
/// model. Forward outputs are preserved (up to f64 rounding of W₀ + Δ).
pub fn merge_adapter(adapted: AdaptedModel) -> LanguageModel {
    let AdaptedModel {
        mut base,
        adapters,
    } = adapted;
    merge_into(&mut base.params, &adapters);
    base
}

pub(crate) fn merge_into(params: &mut ModelParams, adapters: &BTreeMap<String, LowRankAdapter>) {
    let deltas: BTreeMap<&String, Tensor> =
        adapters.iter().map(|(n, a)| (n, a.delta())).collect();
    for (name, tensor) in params.named_params_mut() {
        if let Some(delta) = deltas.get(&name) {
            for (w, d) in tensor.data_mut().iter_mut().zip(delta.data()) {
                *w += d;
            }
        }
    }
}

impl AdaptedModel {
    /// Snapshot of the current effective weights as a plain model.
    pub fn merged(&self) -> LanguageModel {
        let mut snapshot = self.base.clone();
        merge_into(&mut snapshot.params, &self.adapters);
        snapshot
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{
        greedy_decode, next_token_distribution, ArchConfig, TokenSequence, Vocabulary,
    };

    fn fixture() -> LanguageModel {
        let vocab = Vocabulary::with_content((0..6).map(|i| format!("s{i}"))).unwrap();
        let arch = ArchConfig {
            n_layers: 2,
            model_width: 8,
            n_heads: 2,
            max_len: 12,
            positional: crate::lm::PositionalScheme::Learned,
        };
        LanguageModel::init(vocab, &arch, 21).unwrap()
    }

    #[test]
    fn fresh_adapter_is_an_exact_no_op() {
        let model = fixture();
        let cfg = LoraConfig {
            rank: 4,
            alpha: 32.0,
            dropout: 0.0,
        };
        let adapted = apply_adapter(model.clone(), &cfg, 7).unwrap();
        let merged = adapted.merged();
        let x = TokenSequence::prompt(vec![3, 5]);
        let prefix = TokenSequence::output(vec![4]);
        let base_p = next_token_distribution(&model, &x, &prefix, 1.0).unwrap();
        let merged_p = next_token_distribution(&merged, &x, &prefix, 1.0).unwrap();
        assert_eq!(base_p, merged_p, "zero-initialized B must not move logits");
    }

    #[test]
    fn merge_preserves_forward_outputs() {
        let model = fixture();
        let cfg = LoraConfig {
            rank: 3,
            alpha: 16.0,
            dropout: 0.0,
        };
        let mut adapted = apply_adapter(model, &cfg, 3).unwrap();
        // nudge the factors so the delta is non-trivial
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for a in adapted.adapters.values_mut() {
            a.up = Tensor::randn(a.up.shape().to_vec(), 0.05, &mut rng);
        }
        let live = adapted.merged();
        let folded = merge_adapter(adapted);
        for p in 0..5u32 {
            let x = TokenSequence::prompt(vec![3 + p % 4]);
            let prefix = TokenSequence::output(vec![4]);
            let a = next_token_distribution(&live, &x, &prefix, 1.0).unwrap();
            let b = next_token_distribution(&folded, &x, &prefix, 1.0).unwrap();
            for (x1, x2) in a.iter().zip(&b) {
                assert!((x1 - x2).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_above_min_dimension_is_rejected() {
        let model = fixture();
        let cfg = LoraConfig {
            rank: 9, // width is 8
            alpha: 32.0,
            dropout: 0.0,
        };
        assert!(matches!(
            apply_adapter(model, &cfg, 0),
            Err(TrainError::RankTooLarge { .. })
        ));
    }

    #[test]
    fn full_rank_adapter_represents_an_arbitrary_delta() {
        // with r = min_dim, choosing A = I and B = (r/α)·Δ reproduces Δ
        let model = fixture();
        let d = 8usize;
        let cfg = LoraConfig {
            rank: d,
            alpha: 4.0,
            dropout: 0.0,
        };
        let mut adapted =
            apply_adapter_to(model, &cfg, 0, &["block0.wq".to_string()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let want = Tensor::randn(vec![d, d], 0.3, &mut rng);
        {
            let a = adapted.adapters.get_mut("block0.wq").unwrap();
            let mut eye = Tensor::zeros(vec![d, d]);
            for i in 0..d {
                eye.data_mut()[i * d + i] = 1.0;
            }
            a.down = eye;
            let s = a.scale();
            a.up = Tensor::new(
                vec![d, d],
                want.data().iter().map(|v| v / s).collect(),
            )
            .unwrap();
            let delta = a.delta();
            for (got, expect) in delta.data().iter().zip(want.data()) {
                assert!((got - expect).abs() < 1e-12);
            }
        }
        // and merging applies exactly that delta to the base weight
        let before = adapted.base.params.blocks[0].clone();
        let merged = merge_adapter(adapted);
        if let (
            crate::lm::BlockParams::Attention(b),
            crate::lm::BlockParams::Attention(after),
        ) = (&before, &merged.params.blocks[0])
        {
            for ((w0, w1), dv) in b.wq.data().iter().zip(after.wq.data()).zip(want.data()) {
                assert!((w1 - (w0 + dv)).abs() < 1e-12);
            }
        } else {
            panic!("expected attention blocks");
        }
    }

    #[test]
    fn greedy_is_stable_under_fresh_adapters() {
        let model = fixture();
        let adapted = apply_adapter(model.clone(), &LoraConfig::default(), 1).unwrap();
        let x = TokenSequence::prompt(vec![4, 3]);
        let a = greedy_decode(&model, &x, 5).unwrap();
        let b = greedy_decode(&adapted.merged(), &x, 5).unwrap();
        assert_eq!(a, b);
    }
}
