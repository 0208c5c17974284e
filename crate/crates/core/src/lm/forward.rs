//! Taped forward pass. Training and inference build the identical graph;
//! inference simply drops the tape without calling backward, so the
//! likelihood a trainer optimizes is bit-identical to the likelihood the
//! sampler sees.

use crate::numerics::{Tape, Tensor, Var};

use super::arch::{ArchConfig, PositionalScheme};
use super::model::{BlockParams, ModelParams};
use super::{LmError, Result};

/// A weight as seen by the forward pass: either a plain tensor leaf or a
/// frozen base plus a trainable low-rank delta (scaled A·B), optionally
/// with a dropout mask on the delta-path input.
#[derive(Clone, Copy)]
pub enum WeightVar {
    Plain(Var),
    Adapted {
        base: Var,
        down: Var,
        up: Var,
        scale: f64,
        dropout_mask: Option<Var>,
    },
}

/// y = x·W, routing through the low-rank path when one is attached.
fn linear(tape: &mut Tape, x: Var, w: &WeightVar) -> Result<Var> {
    match *w {
        WeightVar::Plain(v) => Ok(tape.matmul(x, v)?),
        WeightVar::Adapted {
            base,
            down,
            up,
            scale,
            dropout_mask,
        } => {
            let main = tape.matmul(x, base)?;
            let x_in = match dropout_mask {
                Some(mask) => tape.mul(x, mask)?,
                None => x,
            };
            let lo = tape.matmul(x_in, down)?;
            let lo = tape.matmul(lo, up)?;
            let delta = tape.scale(lo, scale);
            Ok(tape.add(main, delta)?)
        }
    }
}

#[derive(Clone)]
pub struct AttentionVars {
    pub norm1_gain: Var,
    pub wq: WeightVar,
    pub wk: WeightVar,
    pub wv: WeightVar,
    pub wo: WeightVar,
    pub norm2_gain: Var,
    pub w1: WeightVar,
    pub b1: Var,
    pub w2: WeightVar,
    pub b2: Var,
}

#[derive(Clone)]
pub struct RecurrentVars {
    pub norm1_gain: Var,
    pub wz: WeightVar,
    pub bz: Var,
    pub wh: WeightVar,
    pub bh: Var,
    pub norm2_gain: Var,
    pub w1: WeightVar,
    pub b1: Var,
    pub w2: WeightVar,
    pub b2: Var,
}

#[derive(Clone)]
pub enum BlockVars {
    Attention(AttentionVars),
    Recurrent(RecurrentVars),
}

/// Tape handles for every weight of one model.
#[derive(Clone)]
pub struct ModelVars {
    pub embed: Var,
    pub pos: Option<Var>,
    pub blocks: Vec<BlockVars>,
    pub final_gain: Var,
}

/// Tape handles for one attached low-rank adapter.
#[derive(Clone, Copy)]
pub struct AdapterLeaves {
    pub down: Var,
    pub up: Var,
    pub scale: f64,
    pub dropout: f64,
}

impl ModelVars {
    /// Insert every parameter as a plain leaf.
    pub fn insert(tape: &mut Tape, params: &ModelParams) -> ModelVars {
        let embed = tape.leaf(&params.embed);
        let pos = match params.arch.positional {
            PositionalScheme::Learned => params.pos.as_ref().map(|p| tape.leaf(p)),
            PositionalScheme::Sinusoidal => Some(tape.leaf(&sinusoidal_table(
                params.arch.max_len,
                params.arch.model_width,
            ))),
            PositionalScheme::None => None,
        };
        let blocks = params
            .blocks
            .iter()
            .map(|b| match b {
                BlockParams::Attention(a) => BlockVars::Attention(AttentionVars {
                    norm1_gain: tape.leaf(&a.norm1_gain),
                    wq: WeightVar::Plain(tape.leaf(&a.wq)),
                    wk: WeightVar::Plain(tape.leaf(&a.wk)),
                    wv: WeightVar::Plain(tape.leaf(&a.wv)),
                    wo: WeightVar::Plain(tape.leaf(&a.wo)),
                    norm2_gain: tape.leaf(&a.norm2_gain),
                    w1: WeightVar::Plain(tape.leaf(&a.w1)),
                    b1: tape.leaf(&a.b1),
                    w2: WeightVar::Plain(tape.leaf(&a.w2)),
                    b2: tape.leaf(&a.b2),
                }),
                BlockParams::Recurrent(r) => BlockVars::Recurrent(RecurrentVars {
                    norm1_gain: tape.leaf(&r.norm1_gain),
                    wz: WeightVar::Plain(tape.leaf(&r.wz)),
                    bz: tape.leaf(&r.bz),
                    wh: WeightVar::Plain(tape.leaf(&r.wh)),
                    bh: tape.leaf(&r.bh),
                    norm2_gain: tape.leaf(&r.norm2_gain),
                    w1: WeightVar::Plain(tape.leaf(&r.w1)),
                    b1: tape.leaf(&r.b1),
                    w2: WeightVar::Plain(tape.leaf(&r.w2)),
                    b2: tape.leaf(&r.b2),
                }),
            })
            .collect();
        ModelVars {
            embed,
            pos,
            blocks,
            final_gain: tape.leaf(&params.final_gain),
        }
    }

    /// Rebind the named weights through their adapters for a sequence of
    /// `t` tokens. When `mask_rng` is given, each adapter's delta path
    /// gets a fresh inverted-dropout mask (training mode); without it the
    /// delta path runs unmasked (evaluation mode).
    pub fn with_adapters(
        &self,
        tape: &mut Tape,
        adapters: &std::collections::BTreeMap<String, AdapterLeaves>,
        t: usize,
        mut mask_rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> ModelVars {
        use rand::Rng;
        let mut adapt = |name: String, plain: &WeightVar, tape: &mut Tape| -> WeightVar {
            let Some(leaves) = adapters.get(&name) else {
                return *plain;
            };
            let WeightVar::Plain(base) = plain else {
                return *plain; // already adapted; leave untouched
            };
            let in_dim = tape.shape(leaves.down)[0];
            let dropout_mask = match (&mut mask_rng, leaves.dropout > 0.0) {
                (Some(rng), true) => {
                    let keep = 1.0 - leaves.dropout;
                    let data: Vec<f64> = (0..t * in_dim)
                        .map(|_| {
                            if rng.gen::<f64>() < leaves.dropout {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        })
                        .collect();
                    Some(tape.leaf_raw(vec![t, in_dim], data))
                }
                _ => None,
            };
            WeightVar::Adapted {
                base: *base,
                down: leaves.down,
                up: leaves.up,
                scale: leaves.scale,
                dropout_mask,
            }
        };
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, block)| match block {
                BlockVars::Attention(a) => BlockVars::Attention(AttentionVars {
                    wq: adapt(format!("block{i}.wq"), &a.wq, tape),
                    wk: adapt(format!("block{i}.wk"), &a.wk, tape),
                    wv: adapt(format!("block{i}.wv"), &a.wv, tape),
                    wo: adapt(format!("block{i}.wo"), &a.wo, tape),
                    w1: adapt(format!("block{i}.w1"), &a.w1, tape),
                    w2: adapt(format!("block{i}.w2"), &a.w2, tape),
                    ..a.clone()
                }),
                BlockVars::Recurrent(r) => BlockVars::Recurrent(RecurrentVars {
                    wz: adapt(format!("block{i}.wz"), &r.wz, tape),
                    wh: adapt(format!("block{i}.wh"), &r.wh, tape),
                    w1: adapt(format!("block{i}.w1"), &r.w1, tape),
                    w2: adapt(format!("block{i}.w2"), &r.w2, tape),
                    ..r.clone()
                }),
            })
            .collect();
        ModelVars {
            embed: self.embed,
            pos: self.pos,
            blocks,
            final_gain: self.final_gain,
        }
    }

    /// Leaves whose gradients a full-parameter trainer reads, in the
    /// canonical parameter order of [`ModelParams::named_params`].
    pub fn trainable_leaves(&self) -> Vec<Var> {
        let mut out = vec![self.embed];
        if let Some(pos) = self.pos {
            out.push(pos);
        }
        for block in &self.blocks {
            match block {
                BlockVars::Attention(a) => {
                    out.push(a.norm1_gain);
                    for w in [&a.wq, &a.wk, &a.wv, &a.wo] {
                        if let WeightVar::Plain(v) = w {
                            out.push(*v);
                        }
                    }
                    out.push(a.norm2_gain);
                    if let WeightVar::Plain(v) = a.w1 {
                        out.push(v);
                    }
                    out.push(a.b1);
                    if let WeightVar::Plain(v) = a.w2 {
                        out.push(v);
                    }
                    out.push(a.b2);
                }
                BlockVars::Recurrent(r) => {
                    out.push(r.norm1_gain);
                    if let WeightVar::Plain(v) = r.wz {
                        out.push(v);
                    }
                    out.push(r.bz);
                    if let WeightVar::Plain(v) = r.wh {
                        out.push(v);
                    }
                    out.push(r.bh);
                    out.push(r.norm2_gain);
                    if let WeightVar::Plain(v) = r.w1 {
                        out.push(v);
                    }
                    out.push(r.b1);
                    if let WeightVar::Plain(v) = r.w2 {
                        out.push(v);
                    }
                    out.push(r.b2);
                }
            }
        }
        out.push(self.final_gain);
        out
    }
}

/// Fixed sin/cos position table.
pub fn sinusoidal_table(max_len: usize, width: usize) -> Tensor {
    let mut data = Vec::with_capacity(max_len * width);
    for p in 0..max_len {
        for j in 0..width {
            let pair = (j / 2) as f64;
            let rate = 10000f64.powf(-2.0 * pair / width as f64);
            let angle = p as f64 * rate;
            data.push(if j % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    Tensor::new(vec![max_len, width], data).expect("table shape")
}

/// Strictly causal additive mask: 0 on and below the diagonal, -1e30 above.
fn causal_mask(t: usize) -> Tensor {
    let mut data = vec![0.0; t * t];
    for i in 0..t {
        for j in (i + 1)..t {
            data[i * t + j] = -1e30;
        }
    }
    Tensor::new(vec![t, t], data).expect("mask shape")
}

fn attention_block(
    tape: &mut Tape,
    vars: &AttentionVars,
    x: Var,
    t: usize,
    arch: &ArchConfig,
) -> Result<Var> {
    let d = arch.model_width;
    let heads = arch.n_heads;
    let dh = d / heads;
    let xn = tape.rms_norm(x)?;
    let xn = tape.mul_row(xn, vars.norm1_gain)?;
    let q = linear(tape, xn, &vars.wq)?;
    let k = linear(tape, xn, &vars.wk)?;
    let v = linear(tape, xn, &vars.wv)?;
    let mask = tape.leaf(&causal_mask(t));
    let mut head_outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let scores = tape.add(scores, mask)?;
        let attn = tape.row_softmax(scores, 1.0)?;
        head_outs.push(tape.matmul(attn, vh)?);
    }
    let merged = tape.concat_cols(&head_outs)?;
    let proj = linear(tape, merged, &vars.wo)?;
    let x = tape.add(x, proj)?;
    mlp_sublayer(tape, x, vars.norm2_gain, &vars.w1, vars.b1, &vars.w2, vars.b2)
}

fn recurrent_block(tape: &mut Tape, vars: &RecurrentVars, x: Var, t: usize) -> Result<Var> {
    let xn = tape.rms_norm(x)?;
    let xn = tape.mul_row(xn, vars.norm1_gain)?;
    let z_pre = linear(tape, xn, &vars.wz)?;
    let z_pre = tape.add_row(z_pre, vars.bz)?;
    let z = tape.sigmoid(z_pre);
    let c_pre = linear(tape, xn, &vars.wh)?;
    let c_pre = tape.add_row(c_pre, vars.bh)?;
    let cand = tape.silu(c_pre);
    let d = tape.shape(x)[1];
    let ones = tape.leaf(&Tensor::ones(vec![1, d]));
    let mut state: Option<Var> = None;
    let mut rows = Vec::with_capacity(t);
    for step in 0..t {
        let z_t = tape.slice_rows(z, step, 1)?;
        let c_t = tape.slice_rows(cand, step, 1)?;
        let gated_new = tape.mul(z_t, c_t)?;
        let next = match state {
            None => gated_new,
            Some(prev) => {
                let keep = tape.sub(ones, z_t)?;
                let carried = tape.mul(keep, prev)?;
                tape.add(carried, gated_new)?
            }
        };
        rows.push(next);
        state = Some(next);
    }
    let mixed = tape.concat_rows(&rows)?;
    let x = tape.add(x, mixed)?;
    mlp_sublayer(tape, x, vars.norm2_gain, &vars.w1, vars.b1, &vars.w2, vars.b2)
}

fn mlp_sublayer(
    tape: &mut Tape,
    x: Var,
    gain: Var,
    w1: &WeightVar,
    b1: Var,
    w2: &WeightVar,
    b2: Var,
) -> Result<Var> {
    let xn = tape.rms_norm(x)?;
    let xn = tape.mul_row(xn, gain)?;
    let h = linear(tape, xn, w1)?;
    let h = tape.add_row(h, b1)?;
    let h = tape.silu(h);
    let out = linear(tape, h, w2)?;
    let out = tape.add_row(out, b2)?;
    Ok(tape.add(x, out)?)
}

/// Final-layer hidden states (T×d) for a full token id sequence.
pub fn forward_hidden(
    tape: &mut Tape,
    vars: &ModelVars,
    arch: &ArchConfig,
    ids: &[u32],
) -> Result<Var> {
    let t = ids.len();
    if t == 0 {
        return Err(LmError::EmptySequence);
    }
    if t > arch.max_len {
        return Err(LmError::ContextOverflow {
            needed: t,
            max: arch.max_len,
        });
    }
    let mut x = tape.embed(vars.embed, ids)?;
    if let Some(pos) = vars.pos {
        let slice = tape.slice_rows(pos, 0, t)?;
        x = tape.add(x, slice)?;
    }
    for block in &vars.blocks {
        x = match block {
            BlockVars::Attention(a) => attention_block(tape, a, x, t, arch)?,
            BlockVars::Recurrent(r) => recurrent_block(tape, r, x, t)?,
        };
    }
    let xn = tape.rms_norm(x)?;
    Ok(tape.mul_row(xn, vars.final_gain)?)
}

/// Next-token logits (T×M) via the tied output projection.
pub fn forward_logits(
    tape: &mut Tape,
    vars: &ModelVars,
    arch: &ArchConfig,
    ids: &[u32],
) -> Result<Var> {
    let hidden = forward_hidden(tape, vars, arch, ids)?;
    let et = tape.transpose(vars.embed)?;
    Ok(tape.matmul(hidden, et)?)
}

/// Σ_n log p(y_n | x, y_<n) as a differentiable scalar, EOS term included
/// when `y` carries one; divided by L_y when `length_normalize` is set.
pub fn seq_log_prob_var(
    tape: &mut Tape,
    vars: &ModelVars,
    arch: &ArchConfig,
    x_ids: &[u32],
    y_ids: &[u32],
    bos: u32,
    length_normalize: bool,
) -> Result<Var> {
    if y_ids.is_empty() {
        return Err(LmError::EmptySequence);
    }
    let mut ids = Vec::with_capacity(1 + x_ids.len() + y_ids.len());
    ids.push(bos);
    ids.extend_from_slice(x_ids);
    ids.extend_from_slice(y_ids);
    let logits = forward_logits(tape, vars, arch, &ids)?;
    let logp = tape.row_log_softmax(logits, 1.0)?;
    // position r predicts token ids[r+1]; y_n sits at 1+|x|+n
    let offset = x_ids.len();
    let rows: Vec<usize> = (0..y_ids.len()).map(|n| offset + n).collect();
    let picked = tape.pick(logp, &rows, y_ids)?;
    let total = tape.sum(picked);
    if length_normalize {
        Ok(tape.scale(total, 1.0 / y_ids.len() as f64))
    } else {
        Ok(total)
    }
}
