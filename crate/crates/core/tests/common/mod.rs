//! Shared fixtures for training-level tests.

use prefkd_core::lm::{ArchConfig, LanguageModel, PositionalScheme, Vocabulary};
use prefkd_core::train::{sft_train, LabeledExample, ScheduleKind, TrainConfig};

pub fn ab_vocab() -> Vocabulary {
    Vocabulary::with_content(["a".into(), "b".into()]).unwrap()
}

pub fn small_arch() -> ArchConfig {
    ArchConfig {
        n_layers: 1,
        model_width: 16,
        n_heads: 2,
        max_len: 12,
        positional: PositionalScheme::Learned,
    }
}

pub fn fast_sft_cfg(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        schedule: ScheduleKind::LinearToZero,
        batch_size: 4,
        epochs,
        seed,
        ..TrainConfig::default()
    }
}

/// Grammar corpus: "a" is always followed by "b".
pub fn grammar_dataset(vocab: &Vocabulary) -> Vec<LabeledExample> {
    let a = vocab.id_of("a").unwrap();
    let b = vocab.id_of("b").unwrap();
    vec![LabeledExample {
        id: 0,
        x: vec![a],
        y: vec![b, vocab.eos()],
    }]
}

/// A model trained to convergence on the deterministic grammar.
pub fn grammar_model() -> LanguageModel {
    let vocab = ab_vocab();
    let model = LanguageModel::init(vocab.clone(), &small_arch(), 17).unwrap();
    let dataset = grammar_dataset(&vocab);
    let (trained, _) = sft_train(model, &dataset, &fast_sft_cfg(300, 3)).unwrap();
    trained
}
