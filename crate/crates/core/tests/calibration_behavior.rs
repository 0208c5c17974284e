//! Calibration-loss gradients, distillation-loop behavior, and the
//! score-margin plumbing.

mod common;

use std::collections::BTreeMap;

use common::*;
use prefkd_core::calibration::distill::{batch_loss_grads, batch_loss_value, batch_margins_at};
use prefkd_core::calibration::{
    distill_train, CalLossConfig, CalVariant, CalibrationError, DistillConfig,
};
use prefkd_core::lm::{LanguageModel, ModelParams};
use prefkd_core::numerics::{gradcheck, Tensor};
use prefkd_core::preference::{PreferencePair, Provenance};
use prefkd_core::train::{ScheduleKind, TrainConfig};

fn pair(id: u64, prompt: &str, chosen: &str, rejected: &str) -> PreferencePair {
    PreferencePair {
        example_id: id,
        prompt: prompt.into(),
        chosen: chosen.into(),
        rejected: rejected.into(),
        provenance: Provenance::Pseudo,
        reward_plus: None,
        reward_minus: None,
    }
}

fn toy_setup() -> (LanguageModel, Vec<PreferencePair>, BTreeMap<u64, String>) {
    let model = LanguageModel::init(ab_vocab(), &small_arch(), 33).unwrap();
    let pairs = vec![
        pair(0, "a", "b <eos>", "a a <eos>"),
        pair(1, "b a", "b <eos>", "a <eos>"),
        pair(2, "a b", "a b <eos>", "b b a <eos>"),
    ];
    let references: BTreeMap<u64, String> = [
        (0, "b".to_string()),
        (1, "b".to_string()),
        (2, "a b".to_string()),
    ]
    .into();
    (model, pairs, references)
}

fn distill_cfg(variant: CalVariant) -> DistillConfig {
    DistillConfig {
        train: TrainConfig {
            learning_rate: 1e-3,
            schedule: ScheduleKind::LinearToZero,
            batch_size: 2,
            epochs: 2,
            seed: 5,
            loss: match variant {
                CalVariant::Rank => prefkd_core::train::LossKind::CalRank,
                CalVariant::Margin => prefkd_core::train::LossKind::CalMargin,
            },
            beta: 1.0,
            gamma: 0.7,
            length_normalize: true,
            lora: None,
        },
        cal: CalLossConfig {
            variant,
            beta: 1.0,
            n_max: 2,
            length_normalize: true,
            freeze_score_embeddings: false,
        },
    }
}

/// Rebuild a model from a flat parameter list (canonical order).
fn model_with_params(template: &LanguageModel, params: &[Tensor]) -> LanguageModel {
    let mut model = template.clone();
    for ((_, slot), src) in model.params.named_params_mut().into_iter().zip(params) {
        *slot = src.clone();
    }
    model
}

fn params_of(model: &LanguageModel) -> Vec<Tensor> {
    model
        .params
        .named_params()
        .into_iter()
        .map(|(_, t)| t.clone())
        .collect()
}

fn check_gradients(variant: CalVariant, margins_override: Option<f64>) -> f64 {
    let (model, pairs, references) = toy_setup();
    let cfg = distill_cfg(variant);
    let mut margins = batch_margins_at(&model, &pairs, &references, &cfg).unwrap();
    if let Some(m) = margins_override {
        margins = vec![m; pairs.len()];
    }
    // keep away from hinge kinks: every pre-hinge term must be clearly
    // active or clearly inactive at the evaluation point
    for (i, p) in pairs.iter().enumerate() {
        let single = vec![p.clone()];
        let single_margin = vec![margins[i]];
        let value = batch_loss_value(&model, &single, &references, &cfg, &single_margin).unwrap();
        let pre_hinge_magnitude = value.abs();
        if value > 0.0 {
            assert!(pre_hinge_magnitude > 1e-3, "pair {i} sits on the hinge kink");
        }
    }
    let (_, analytic) = batch_loss_grads(&model, &pairs, &references, &cfg, &margins).unwrap();
    let base = params_of(&model);
    gradcheck::max_rel_error(
        &base,
        &analytic,
        |p| {
            let m = model_with_params(&model, p);
            batch_loss_value(&m, &pairs, &references, &cfg, &margins).unwrap()
        },
        gradcheck::DEFAULT_STEP,
    )
}

#[test]
fn rank_loss_gradients_match_finite_differences() {
    // β = 5 keeps every hinge strictly active for a fresh model
    let err = check_gradients(CalVariant::Rank, Some(5.0));
    assert!(err < 1e-5, "max rel err {err}");
}

#[test]
fn margin_loss_gradients_match_finite_differences() {
    let (model, pairs, references) = toy_setup();
    let cfg = distill_cfg(CalVariant::Margin);
    let margins = batch_margins_at(&model, &pairs, &references, &cfg).unwrap();
    // shift margins up to force all hinges strictly active
    let margins: Vec<f64> = margins.iter().map(|m| m + 5.0).collect();
    let (_, analytic) = batch_loss_grads(&model, &pairs, &references, &cfg, &margins).unwrap();
    let base = params_of(&model);
    let err = gradcheck::max_rel_error(
        &base,
        &analytic,
        |p| {
            let m = model_with_params(&model, p);
            batch_loss_value(&m, &pairs, &references, &cfg, &margins).unwrap()
        },
        gradcheck::DEFAULT_STEP,
    );
    assert!(err < 1e-5, "max rel err {err}");
}

#[test]
fn inactive_hinges_have_exactly_zero_gradient() {
    let (model, pairs, references) = toy_setup();
    let cfg = distill_cfg(CalVariant::Rank);
    let margins = vec![-50.0; pairs.len()]; // hinge strictly inactive
    let (loss, analytic) = batch_loss_grads(&model, &pairs, &references, &cfg, &margins).unwrap();
    assert_eq!(loss, 0.0);
    for g in analytic {
        assert!(g.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn zero_beta_on_separated_pairs_changes_nothing() {
    let (model, pairs, references) = toy_setup();
    let mut cfg = distill_cfg(CalVariant::Rank);
    cfg.cal.beta = 0.0;
    // manufacture separation: train pairs whose chosen side the model
    // already prefers, by swapping sides where needed
    let mut separated = Vec::new();
    for p in &pairs {
        let margins = batch_margins_at(&model, &[p.clone()], &references, &cfg).unwrap();
        let v = batch_loss_value(&model, &[p.clone()], &references, &cfg, &margins).unwrap();
        if v > 0.0 {
            let mut flipped = p.clone();
            std::mem::swap(&mut flipped.chosen, &mut flipped.rejected);
            separated.push(flipped);
        } else {
            separated.push(p.clone());
        }
    }
    let margins = vec![0.0; separated.len()];
    let check = batch_loss_value(&model, &separated, &references, &cfg, &margins).unwrap();
    assert_eq!(check, 0.0, "pairs must start separated for this fixture");
    let out = distill_train(model.clone(), &separated, &references, &cfg).unwrap();
    assert_eq!(out.model, model, "inactive hinges must not move parameters");
}

#[test]
fn distillation_is_deterministic_per_seed() {
    prefkd_core::parallel::set_single_threaded(true);
    let (model, pairs, references) = toy_setup();
    let cfg = distill_cfg(CalVariant::Rank);
    let a = distill_train(model.clone(), &pairs, &references, &cfg).unwrap();
    let b = distill_train(model, &pairs, &references, &cfg).unwrap();
    prefkd_core::parallel::set_single_threaded(false);
    assert_eq!(a.model, b.model);
    assert_eq!(a.final_mean_gap, b.final_mean_gap);
}

#[test]
fn mean_gap_increases_under_training() {
    let (model, pairs, references) = toy_setup();
    let mut cfg = distill_cfg(CalVariant::Rank);
    cfg.train.epochs = 30;
    cfg.train.learning_rate = 2e-3;
    let out = distill_train(model, &pairs, &references, &cfg).unwrap();
    assert!(
        out.final_mean_gap > out.initial_mean_gap,
        "gap should widen: {} → {}",
        out.initial_mean_gap,
        out.final_mean_gap
    );
}

#[test]
fn margin_variant_requires_references() {
    let (model, pairs, _) = toy_setup();
    let cfg = distill_cfg(CalVariant::Margin);
    let incomplete: BTreeMap<u64, String> = [(0u64, "b".to_string())].into();
    match distill_train(model, &pairs, &incomplete, &cfg) {
        Err(CalibrationError::MissingReference(id)) => assert!(id == 1 || id == 2),
        other => panic!("expected MissingReference, got {other:?}"),
    }
}

#[test]
fn margin_variant_trains_end_to_end() {
    let (model, pairs, references) = toy_setup();
    let mut cfg = distill_cfg(CalVariant::Margin);
    cfg.train.epochs = 10;
    let out = distill_train(model, &pairs, &references, &cfg).unwrap();
    assert!(out.final_mean_gap.is_finite());
    assert_eq!(out.log.len(), 10 * 2); // 3 pairs, batch 2 → 2 steps/epoch
    // frozen-score variant also runs
    let (model2, _, _) = toy_setup();
    cfg.cal.freeze_score_embeddings = true;
    let out2 = distill_train(model2, &pairs, &references, &cfg).unwrap();
    assert!(out2.final_mean_gap.is_finite());
}

#[test]
fn hinge_loss_trends_down_over_fifty_steps() {
    let (model, pairs, references) = toy_setup();
    let mut cfg = distill_cfg(CalVariant::Rank);
    cfg.train.epochs = 25; // 2 steps per epoch → 50 steps
    cfg.train.learning_rate = 1e-3;
    let out = distill_train(model, &pairs, &references, &cfg).unwrap();
    let losses: Vec<f64> = out.log.iter().map(|r| r.loss).collect();
    assert!(losses.len() >= 50);
    // moving average (window 10) non-increasing within 5% jitter
    let window = 10;
    let ma: Vec<f64> = losses
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    let tolerance = 0.05 * ma[0].abs().max(1e-9);
    let mut best_so_far = ma[0];
    for &v in &ma {
        assert!(
            v <= best_so_far + tolerance,
            "hinge moving average regressed: {v} after {best_so_far}"
        );
        if v < best_so_far {
            best_so_far = v;
        }
    }
}

#[test]
fn lora_distillation_moves_only_adapters() {
    let (model, pairs, references) = toy_setup();
    let embed_before = model.params.embed.clone();
    let mut cfg = distill_cfg(CalVariant::Rank);
    cfg.train.lora = Some(prefkd_core::train::LoraConfig::default());
    cfg.train.epochs = 5;
    let out = distill_train(model, &pairs, &references, &cfg).unwrap();
    assert_eq!(out.model.params.embed, embed_before);
}

#[test]
fn toy_model_is_within_the_2k_parameter_budget() {
    let arch = prefkd_core::lm::ArchConfig {
        n_layers: 1,
        model_width: 12,
        n_heads: 2,
        max_len: 10,
        positional: prefkd_core::lm::PositionalScheme::Learned,
    };
    let p = ModelParams::init(&arch, 5, 0).unwrap();
    assert!(p.n_params() <= 2000, "toy model has {} params", p.n_params());
}
