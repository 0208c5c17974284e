//! What a trainer updates: either every model parameter, or only the
//! low-rank adapter factors over a frozen base.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::lm::forward::AdapterLeaves;
use crate::lm::{LanguageModel, ModelVars};
use crate::numerics::{Tape, Tensor, Var};

use super::config::TrainConfig;
use super::lora::{apply_adapter, merge_adapter, AdaptedModel};
use super::Result;

pub enum Trainee {
    Full(LanguageModel),
    Lora(AdaptedModel),
}

impl Trainee {
    /// Wrap a model per the config: adapters when `cfg.lora` is set
    /// (seeded from the training seed), full-parameter otherwise.
    pub fn from_config(model: LanguageModel, cfg: &TrainConfig) -> Result<Self> {
        match &cfg.lora {
            Some(lora) => Ok(Trainee::Lora(apply_adapter(
                model,
                lora,
                cfg.seed ^ 0x10ad,
            )?)),
            None => Ok(Trainee::Full(model)),
        }
    }

    pub fn base(&self) -> &LanguageModel {
        match self {
            Trainee::Full(m) => m,
            Trainee::Lora(a) => &a.base,
        }
    }

    /// Snapshot of the current effective weights for inference.
    pub fn current_model(&self) -> LanguageModel {
        match self {
            Trainee::Full(m) => m.clone(),
            Trainee::Lora(a) => a.merged(),
        }
    }

    /// Merge (if adapted) and hand back the plain trained model.
    pub fn finish(self) -> LanguageModel {
        match self {
            Trainee::Full(m) => m,
            Trainee::Lora(a) => merge_adapter(a),
        }
    }

    pub fn trainable_sizes(&self) -> Vec<usize> {
        match self {
            Trainee::Full(m) => m
                .params
                .named_params()
                .iter()
                .map(|(_, t)| t.numel())
                .collect(),
            Trainee::Lora(a) => a
                .adapters
                .values()
                .flat_map(|ad| [ad.down.numel(), ad.up.numel()])
                .collect(),
        }
    }

    /// Trainable tensors in the fixed order the optimizer state uses.
    pub fn trainable_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Trainee::Full(m) => m
                .params
                .named_params_mut()
                .into_iter()
                .map(|(_, t)| t)
                .collect(),
            Trainee::Lora(a) => a
                .adapters
                .values_mut()
                .flat_map(|ad| [&mut ad.down, &mut ad.up])
                .collect(),
        }
    }

    /// Insert every leaf this trainee needs onto a fresh tape.
    pub fn insert_leaves(&self, tape: &mut Tape) -> TraineeLeaves {
        let base_vars = ModelVars::insert(tape, &self.base().params);
        match self {
            Trainee::Full(_) => {
                let trainables = base_vars.trainable_leaves();
                TraineeLeaves {
                    base_vars,
                    adapters: BTreeMap::new(),
                    trainables,
                }
            }
            Trainee::Lora(a) => {
                let mut adapters = BTreeMap::new();
                let mut trainables = Vec::with_capacity(2 * a.adapters.len());
                for (name, ad) in &a.adapters {
                    let down = tape.leaf(&ad.down);
                    let up = tape.leaf(&ad.up);
                    trainables.push(down);
                    trainables.push(up);
                    adapters.insert(
                        name.clone(),
                        AdapterLeaves {
                            down,
                            up,
                            scale: ad.scale(),
                            dropout: ad.dropout,
                        },
                    );
                }
                TraineeLeaves {
                    base_vars,
                    adapters,
                    trainables,
                }
            }
        }
    }
}

/// Leaves for one tape, shared across the examples of a batch slice.
pub struct TraineeLeaves {
    base_vars: ModelVars,
    adapters: BTreeMap<String, AdapterLeaves>,
    trainables: Vec<Var>,
}

impl TraineeLeaves {
    /// Weight view for one sequence of `t` tokens. `mask_rng` enables
    /// adapter dropout (training); pass `None` for evaluation passes.
    pub fn view(
        &self,
        tape: &mut Tape,
        t: usize,
        mask_rng: Option<&mut ChaCha8Rng>,
    ) -> ModelVars {
        if self.adapters.is_empty() {
            self.base_vars.clone()
        } else {
            self.base_vars.with_adapters(tape, &self.adapters, t, mask_rng)
        }
    }

    /// Gradients for the trainable tensors, aligned with
    /// [`Trainee::trainable_tensors_mut`].
    pub fn grads(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.trainables
            .iter()
            .map(|&v| tape.grad_dense(v))
            .collect()
    }

    pub fn trainable_vars(&self) -> &[Var] {
        &self.trainables
    }
}
