//! Model parameters and initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::Tensor;

use super::arch::{ArchConfig, PositionalScheme};
use super::vocab::Vocabulary;
use super::{LmError, Result};

/// Weights of one pre-norm attention block:
/// x += attn(rmsnorm(x)·g1); x += mlp(rmsnorm(x)·g2).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub norm1_gain: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub norm2_gain: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Weights of one pre-norm gated-recurrent block: the token mix is
/// h_t = (1−z_t)⊙h_{t−1} + z_t⊙h̃_t with z = σ(x·Wz+bz), h̃ = silu(x·Wh+bh).
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentParams {
    pub norm1_gain: Tensor,
    pub wz: Tensor,
    pub bz: Tensor,
    pub wh: Tensor,
    pub bh: Tensor,
    pub norm2_gain: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlockParams {
    Attention(AttentionParams),
    Recurrent(RecurrentParams),
}

/// All weights of one model plus its architecture descriptor. The output
/// projection is tied to the embedding table.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub version: u32,
    pub arch: ArchConfig,
    pub embed: Tensor,
    /// Learned position table; `None` for sinusoidal/none schemes.
    pub pos: Option<Tensor>,
    pub blocks: Vec<BlockParams>,
    pub final_gain: Tensor,
}

/// A model bound to the vocabulary it indexes.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageModel {
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

pub const PARAMS_VERSION: u32 = 1;

impl ModelParams {
    /// Gaussian init: matrices at std 1/√fan_in, embeddings at 0.1,
    /// gains at one, biases at zero.
    pub fn init(arch: &ArchConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = arch.model_width;
        let h = arch.hidden_width();
        let mat = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            Tensor::randn(vec![rows, cols], 1.0 / (rows as f64).sqrt(), rng)
        };
        let embed = Tensor::randn(vec![vocab_size, d], 0.1, &mut rng);
        let pos = match arch.positional {
            PositionalScheme::Learned => {
                Some(Tensor::randn(vec![arch.max_len, d], 0.1, &mut rng))
            }
            PositionalScheme::Sinusoidal | PositionalScheme::None => None,
        };
        let mut blocks = Vec::with_capacity(arch.n_layers);
        for _ in 0..arch.n_layers {
            if arch.uses_attention() {
                blocks.push(BlockParams::Attention(AttentionParams {
                    norm1_gain: Tensor::ones(vec![d]),
                    wq: mat(d, d, &mut rng),
                    wk: mat(d, d, &mut rng),
                    wv: mat(d, d, &mut rng),
                    wo: mat(d, d, &mut rng),
                    norm2_gain: Tensor::ones(vec![d]),
                    w1: mat(d, h, &mut rng),
                    b1: Tensor::zeros(vec![h]),
                    w2: mat(h, d, &mut rng),
                    b2: Tensor::zeros(vec![d]),
                }));
            } else {
                blocks.push(BlockParams::Recurrent(RecurrentParams {
                    norm1_gain: Tensor::ones(vec![d]),
                    wz: mat(d, d, &mut rng),
                    bz: Tensor::zeros(vec![d]),
                    wh: mat(d, d, &mut rng),
                    bh: Tensor::zeros(vec![d]),
                    norm2_gain: Tensor::ones(vec![d]),
                    w1: mat(d, h, &mut rng),
                    b1: Tensor::zeros(vec![h]),
                    w2: mat(h, d, &mut rng),
                    b2: Tensor::zeros(vec![d]),
                }));
            }
        }
        Ok(Self {
            version: PARAMS_VERSION,
            arch: arch.clone(),
            embed,
            pos,
            blocks,
            final_gain: Tensor::ones(vec![d]),
        })
    }

    /// All weights zeroed; used in tests for the uniform-logits regime.
    pub fn zeroed(arch: &ArchConfig, vocab_size: usize) -> Result<Self> {
        let mut p = Self::init(arch, vocab_size, 0)?;
        for (_, t) in p.named_params_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        Ok(p)
    }

    /// Parameters in canonical (checkpoint) order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        out.push(("embed".into(), &self.embed));
        if let Some(pos) = &self.pos {
            out.push(("pos".into(), pos));
        }
        for (i, block) in self.blocks.iter().enumerate() {
            match block {
                BlockParams::Attention(a) => {
                    for (name, t) in [
                        ("norm1_gain", &a.norm1_gain),
                        ("wq", &a.wq),
                        ("wk", &a.wk),
                        ("wv", &a.wv),
                        ("wo", &a.wo),
                        ("norm2_gain", &a.norm2_gain),
                        ("w1", &a.w1),
                        ("b1", &a.b1),
                        ("w2", &a.w2),
                        ("b2", &a.b2),
                    ] {
                        out.push((format!("block{i}.{name}"), t));
                    }
                }
                BlockParams::Recurrent(r) => {
                    for (name, t) in [
                        ("norm1_gain", &r.norm1_gain),
                        ("wz", &r.wz),
                        ("bz", &r.bz),
                        ("wh", &r.wh),
                        ("bh", &r.bh),
                        ("norm2_gain", &r.norm2_gain),
                        ("w1", &r.w1),
                        ("b1", &r.b1),
                        ("w2", &r.w2),
                        ("b2", &r.b2),
                    ] {
                        out.push((format!("block{i}.{name}"), t));
                    }
                }
            }
        }
        out.push(("final_gain".into(), &self.final_gain));
        out
    }

    /// Mutable view in the same canonical order.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        out.push(("embed".into(), &mut self.embed));
        if let Some(pos) = &mut self.pos {
            out.push(("pos".into(), pos));
        }
        for (i, block) in self.blocks.iter_mut().enumerate() {
            match block {
                BlockParams::Attention(a) => {
                    out.push((format!("block{i}.norm1_gain"), &mut a.norm1_gain));
                    out.push((format!("block{i}.wq"), &mut a.wq));
                    out.push((format!("block{i}.wk"), &mut a.wk));
                    out.push((format!("block{i}.wv"), &mut a.wv));
                    out.push((format!("block{i}.wo"), &mut a.wo));
                    out.push((format!("block{i}.norm2_gain"), &mut a.norm2_gain));
                    out.push((format!("block{i}.w1"), &mut a.w1));
                    out.push((format!("block{i}.b1"), &mut a.b1));
                    out.push((format!("block{i}.w2"), &mut a.w2));
                    out.push((format!("block{i}.b2"), &mut a.b2));
                }
                BlockParams::Recurrent(r) => {
                    out.push((format!("block{i}.norm1_gain"), &mut r.norm1_gain));
                    out.push((format!("block{i}.wz"), &mut r.wz));
                    out.push((format!("block{i}.bz"), &mut r.bz));
                    out.push((format!("block{i}.wh"), &mut r.wh));
                    out.push((format!("block{i}.bh"), &mut r.bh));
                    out.push((format!("block{i}.norm2_gain"), &mut r.norm2_gain));
                    out.push((format!("block{i}.w1"), &mut r.w1));
                    out.push((format!("block{i}.b1"), &mut r.b1));
                    out.push((format!("block{i}.w2"), &mut r.w2));
                    out.push((format!("block{i}.b2"), &mut r.b2));
                }
            }
        }
        out.push(("final_gain".into(), &mut self.final_gain));
        out
    }

    /// 2-D weights eligible for low-rank adaptation, canonical order.
    pub fn adaptable_weight_names(&self) -> Vec<String> {
        self.named_params()
            .into_iter()
            .filter(|(name, t)| t.shape().len() == 2 && name.starts_with("block"))
            .map(|(name, _)| name)
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.shape()[0]
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.named_params() {
            t.check_finite("model parameter").map_err(|_| {
                LmError::BadCheckpoint(format!("non-finite values in parameter {name}"))
            })?;
        }
        Ok(())
    }
}

impl LanguageModel {
    pub fn init(vocab: Vocabulary, arch: &ArchConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(arch, vocab.size(), seed)?;
        Ok(Self { vocab, params })
    }

    pub fn zeroed(vocab: Vocabulary, arch: &ArchConfig) -> Result<Self> {
        let params = ModelParams::zeroed(arch, vocab.size())?;
        Ok(Self { vocab, params })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.params.arch
    }

    pub fn max_len(&self) -> usize {
        self.params.arch.max_len
    }

    /// Both models index the same token set (required before any
    /// cross-model operation such as distillation or pair sampling).
    pub fn same_vocab(&self, other: &LanguageModel) -> bool {
        self.vocab == other.vocab
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_vocab() -> Vocabulary {
        Vocabulary::with_content((0..5).map(|i| format!("s{i}"))).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let arch = ArchConfig::default_student();
        let a = ModelParams::init(&arch, 8, 3).unwrap();
        let b = ModelParams::init(&arch, 8, 3).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::init(&arch, 8, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn named_params_cover_everything_once() {
        let arch = ArchConfig {
            n_layers: 2,
            model_width: 8,
            n_heads: 2,
            max_len: 6,
            positional: PositionalScheme::Learned,
        };
        let p = ModelParams::init(&arch, 7, 0).unwrap();
        let names: Vec<String> = p.named_params().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        assert_eq!(names[0], "embed");
        assert_eq!(names.last().unwrap(), "final_gain");
        let total: usize = p.named_params().iter().map(|(_, t)| t.numel()).sum();
        assert_eq!(total, p.n_params());
    }

    #[test]
    fn recurrent_arch_builds() {
        let arch = ArchConfig {
            n_layers: 1,
            model_width: 6,
            n_heads: 0,
            max_len: 8,
            positional: PositionalScheme::None,
        };
        let m = LanguageModel::init(tiny_vocab(), &arch, 1).unwrap();
        assert!(m.params.pos.is_none());
        assert!(matches!(m.params.blocks[0], BlockParams::Recurrent(_)));
    }
}
