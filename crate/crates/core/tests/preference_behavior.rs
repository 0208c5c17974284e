//! Pseudo-preference pair construction and reward-verified mixing.

mod common;

use common::*;
use prefkd_core::artifact::FileMeta;
use prefkd_core::eval::RewardModel;
use prefkd_core::lm::{LanguageModel, Vocabulary};
use prefkd_core::preference::{
    generate_pairs, mix_real_pairs, read_pairs, teacher_student_win_rate, write_pairs,
    PreferenceError, Provenance,
};

struct LongerWins;
impl RewardModel for LongerWins {
    fn score(&self, _: &str, response: &str) -> f64 {
        response.split_whitespace().count() as f64
    }
    fn name(&self) -> &str {
        "longer-wins"
    }
}

struct ConstReward;
impl RewardModel for ConstReward {
    fn score(&self, _: &str, _: &str) -> f64 {
        0.5
    }
    fn name(&self) -> &str {
        "const"
    }
}

struct ChosenHasB;
impl RewardModel for ChosenHasB {
    fn score(&self, _: &str, response: &str) -> f64 {
        if response.split_whitespace().any(|t| t == "b") {
            1.0
        } else {
            0.0
        }
    }
    fn name(&self) -> &str {
        "has-b"
    }
}

fn prompts(n: u64) -> Vec<(u64, String)> {
    (0..n).map(|i| (i, "a".to_string())).collect()
}

#[test]
fn identical_models_drop_some_pairs_and_keep_teacher_plus() {
    let model = grammar_model();
    let out = generate_pairs(&model, &model, &prompts(60), 1.2, 4, 99).unwrap();
    assert!(
        out.dropped_identical > 0,
        "identical models must collide on some prompts"
    );
    assert_eq!(out.pairs.len() + out.dropped_identical, 60);
    for p in &out.pairs {
        assert_ne!(p.chosen, p.rejected);
        assert_eq!(p.provenance, Provenance::Pseudo);
    }
}

#[test]
fn deterministic_teacher_vs_uniform_student() {
    let teacher = grammar_model();
    let student = LanguageModel::zeroed(teacher.vocab.clone(), &small_arch()).unwrap();
    let out = generate_pairs(&teacher, &student, &prompts(100), 0.7, 4, 7).unwrap();
    let forced = "b <eos>";
    let mut kept = 0;
    for p in &out.pairs {
        assert_eq!(p.chosen, forced, "teacher sample should be the forced string");
        kept += 1;
    }
    assert!(kept >= 90, "uniform student rarely matches the teacher");
}

#[test]
fn pair_files_are_byte_identical_per_seed() {
    let teacher = grammar_model();
    let student = LanguageModel::zeroed(teacher.vocab.clone(), &small_arch()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = FileMeta::new("pairs", "cafebabe", 5);
    let mut bytes = Vec::new();
    for run in 0..2 {
        let out = generate_pairs(&teacher, &student, &prompts(40), 0.7, 4, 5).unwrap();
        let path = dir.path().join(format!("pairs{run}.jsonl"));
        write_pairs(&path, &out.pairs, &meta).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let (pairs, read_meta) = read_pairs(&dir.path().join("pairs0.jsonl")).unwrap();
    assert_eq!(read_meta, meta);
    assert!(!pairs.is_empty());
}

#[test]
fn vocab_mismatch_is_rejected() {
    let teacher = grammar_model();
    let other = Vocabulary::with_content(["q".into(), "r".into()]).unwrap();
    let student = LanguageModel::zeroed(other, &small_arch()).unwrap();
    assert!(matches!(
        generate_pairs(&teacher, &student, &prompts(3), 0.7, 4, 0),
        Err(PreferenceError::VocabMismatch)
    ));
}

#[test]
fn empty_distill_set_is_an_error() {
    let model = grammar_model();
    assert!(matches!(
        generate_pairs(&model, &model, &[], 0.7, 4, 0),
        Err(PreferenceError::EmptyDistillSet)
    ));
}

fn fixture_pairs() -> Vec<prefkd_core::preference::PreferencePair> {
    let teacher = grammar_model();
    let student = LanguageModel::zeroed(teacher.vocab.clone(), &small_arch()).unwrap();
    generate_pairs(&teacher, &student, &prompts(50), 0.9, 4, 3)
        .unwrap()
        .pairs
}

#[test]
fn ratio_zero_is_the_identity() {
    let pairs = fixture_pairs();
    let out = mix_real_pairs(&pairs, &LongerWins, 0.0, 11).unwrap();
    assert_eq!(out.pairs, pairs);
    assert_eq!(out.swapped, 0);
    assert_eq!(out.verified, 0);
}

#[test]
fn ratio_one_fully_reranks_by_the_reward() {
    let pairs = fixture_pairs();
    let out = mix_real_pairs(&pairs, &LongerWins, 1.0, 11).unwrap();
    assert_eq!(out.verified, pairs.len());
    for p in &out.pairs {
        assert_eq!(p.provenance, Provenance::RewardVerified);
        let plus = LongerWins.score("", &Vocabulary::strip_special_symbols(&p.chosen));
        let minus = LongerWins.score("", &Vocabulary::strip_special_symbols(&p.rejected));
        assert!(
            plus >= minus,
            "chosen side must carry the higher reward after re-ranking"
        );
        assert!(p.reward_plus.unwrap() >= p.reward_minus.unwrap());
        assert_ne!(p.chosen, p.rejected);
    }
    // idempotent at ratio 1 with a deterministic reward
    let again = mix_real_pairs(&out.pairs, &LongerWins, 1.0, 11).unwrap();
    assert_eq!(again.pairs, out.pairs);
    assert_eq!(again.swapped, 0);
}

#[test]
fn swap_count_is_bounded_by_the_verified_subset() {
    let pairs = fixture_pairs();
    for ratio in [0.25, 0.5, 0.75] {
        let out = mix_real_pairs(&pairs, &LongerWins, ratio, 4).unwrap();
        let cap = (ratio * pairs.len() as f64).floor() as usize;
        assert_eq!(out.verified, cap);
        assert!(out.swapped <= cap);
        let verified = out
            .pairs
            .iter()
            .filter(|p| p.provenance == Provenance::RewardVerified)
            .count();
        assert_eq!(verified, cap);
    }
}

#[test]
fn ties_keep_pseudo_order_and_are_counted() {
    let pairs = fixture_pairs();
    let out = mix_real_pairs(&pairs, &ConstReward, 1.0, 8).unwrap();
    assert_eq!(out.swapped, 0);
    assert_eq!(out.ties, pairs.len());
    for (before, after) in pairs.iter().zip(&out.pairs) {
        assert_eq!(before.chosen, after.chosen);
        assert_eq!(before.rejected, after.rejected);
    }
}

#[test]
fn bad_ratio_is_rejected() {
    let pairs = fixture_pairs();
    assert!(matches!(
        mix_real_pairs(&pairs, &ConstReward, 1.5, 0),
        Err(PreferenceError::BadRatio(_))
    ));
}

#[test]
fn win_rate_extremes() {
    let pairs = fixture_pairs();
    let wr = teacher_student_win_rate(&pairs, &ConstReward).unwrap();
    assert_eq!(wr, 0.0, "constant reward ties everywhere");
    // the grammar teacher always emits "b <eos>"; the uniform student
    // rarely does, so a b-detector scores the teacher side 1
    let wr = teacher_student_win_rate(&pairs, &ChosenHasB).unwrap();
    assert!(wr > 50.0, "teacher should win most pairs, wr {wr}");
    assert!(matches!(
        teacher_student_win_rate(&[], &ConstReward),
        Err(PreferenceError::EmptyPairs)
    ));
}
