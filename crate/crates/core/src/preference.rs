//! Pseudo-preference pairs from paired teacher/student sampling.
//!
//! One teacher sample and one student sample per distillation prompt;
//! the teacher side is labeled preferred purely on the capacity gap, no
//! reward model in the loop. Reward-verified re-ranking and the
//! teacher-student win rate live here too.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::FileMeta;
use crate::eval::RewardModel;
use crate::lm::{sample, LanguageModel, LmError, TokenSequence, Vocabulary};
use crate::parallel;

#[derive(Debug, thiserror::Error)]
pub enum PreferenceError {
    #[error("distillation prompt set is empty")]
    EmptyDistillSet,
    #[error("pair set is empty")]
    EmptyPairs,
    #[error("teacher and student vocabularies differ")]
    VocabMismatch,
    #[error("ratio {0} outside [0, 1]")]
    BadRatio(f64),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad pair file: {0}")]
    BadFile(String),
}

pub type Result<T> = std::result::Result<T, PreferenceError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Pseudo,
    RewardVerified,
}

/// A (chosen, rejected) output pair for one prompt. Texts are
/// space-joined token symbols; a sampled sequence keeps its trailing
/// `<eos>` marker so likelihood accounting survives the file round-trip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub example_id: u64,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_minus: Option<f64>,
}

pub struct PairGenOutcome {
    pub pairs: Vec<PreferencePair>,
    /// Prompts dropped because teacher and student sampled identical strings.
    pub dropped_identical: usize,
}

const STUDENT_STREAM: u64 = 0x5eed_517d_e57f_0001;

/// Samples ŷ_T and ŷ_S per prompt at temperature `gamma`, labels the
/// teacher side "+", and drops prompts whose two samples are identical.
/// Per-prompt seeds are `seed ⊕ example_id` (student stream offset by a
/// fixed constant). Output is sorted by example id.
pub fn generate_pairs(
    teacher: &LanguageModel,
    student: &LanguageModel,
    distill_set: &[(u64, String)],
    gamma: f64,
    max_new: usize,
    seed: u64,
) -> Result<PairGenOutcome> {
    if distill_set.is_empty() {
        return Err(PreferenceError::EmptyDistillSet);
    }
    if !teacher.same_vocab(student) {
        return Err(PreferenceError::VocabMismatch);
    }
    let sampled = parallel::map_indexed(distill_set, |_, (id, prompt)| -> Result<_> {
        let ids = teacher.vocab.encode(prompt)?;
        let x = TokenSequence::prompt(ids);
        let t_seed = seed ^ id;
        let s_seed = (seed ^ id).wrapping_add(STUDENT_STREAM);
        let y_t = sample(teacher, &x, gamma, max_new, t_seed)?;
        let y_s = sample(student, &x, gamma, max_new, s_seed)?;
        let chosen = teacher.vocab.decode(&y_t.ids)?;
        let rejected = student.vocab.decode(&y_s.ids)?;
        Ok((*id, prompt.clone(), chosen, rejected))
    });
    let mut pairs = Vec::with_capacity(distill_set.len());
    let mut dropped = 0usize;
    for r in sampled {
        let (id, prompt, chosen, rejected) = r?;
        if chosen == rejected {
            dropped += 1;
            continue;
        }
        pairs.push(PreferencePair {
            example_id: id,
            prompt,
            chosen,
            rejected,
            provenance: Provenance::Pseudo,
            reward_plus: None,
            reward_minus: None,
        });
    }
    pairs.sort_by_key(|p| p.example_id);
    Ok(PairGenOutcome {
        pairs,
        dropped_identical: dropped,
    })
}

pub struct MixOutcome {
    pub pairs: Vec<PreferencePair>,
    pub verified: usize,
    pub swapped: usize,
    pub ties: usize,
}

/// Re-ranks a seeded uniform subset of ⌊ratio·N⌋ pairs so the
/// higher-reward side is chosen; ties keep the pseudo order. Re-ranked
/// pairs carry reward scores and the reward_verified provenance.
pub fn mix_real_pairs(
    pairs: &[PreferencePair],
    reward: &dyn RewardModel,
    ratio: f64,
    seed: u64,
) -> Result<MixOutcome> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(PreferenceError::BadRatio(ratio));
    }
    let n_verify = (ratio * pairs.len() as f64).floor() as usize;
    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    indices.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    indices.truncate(n_verify);
    indices.sort_unstable();

    let mut out = pairs.to_vec();
    let mut swapped = 0usize;
    let mut ties = 0usize;
    for &i in &indices {
        let pair = &mut out[i];
        let prompt = Vocabulary::strip_special_symbols(&pair.prompt);
        let plus = reward.score(&prompt, &Vocabulary::strip_special_symbols(&pair.chosen));
        let minus = reward.score(&prompt, &Vocabulary::strip_special_symbols(&pair.rejected));
        if minus > plus {
            std::mem::swap(&mut pair.chosen, &mut pair.rejected);
            pair.reward_plus = Some(minus);
            pair.reward_minus = Some(plus);
            swapped += 1;
        } else {
            if minus == plus {
                ties += 1;
            }
            pair.reward_plus = Some(plus);
            pair.reward_minus = Some(minus);
        }
        pair.provenance = Provenance::RewardVerified;
    }
    if ties > 0 {
        log::info!("mix_real_pairs: {ties} reward ties kept pseudo order");
    }
    Ok(MixOutcome {
        pairs: out,
        verified: n_verify,
        swapped,
        ties,
    })
}

/// Percentage of pairs whose teacher sample the reward model strictly
/// prefers over the student sample; ties count as non-wins. Expects
/// freshly generated pairs (chosen = teacher side).
pub fn teacher_student_win_rate(
    pairs: &[PreferencePair],
    reward: &dyn RewardModel,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(PreferenceError::EmptyPairs);
    }
    let wins = pairs
        .iter()
        .filter(|p| {
            let prompt = Vocabulary::strip_special_symbols(&p.prompt);
            let t = reward.score(&prompt, &Vocabulary::strip_special_symbols(&p.chosen));
            let s = reward.score(&prompt, &Vocabulary::strip_special_symbols(&p.rejected));
            t > s
        })
        .count();
    Ok(100.0 * wins as f64 / pairs.len() as f64)
}

/// Writes a pair file: one meta line, then one JSON record per pair.
pub fn write_pairs(path: &Path, pairs: &[PreferencePair], meta: &FileMeta) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &meta.as_header())
        .map_err(|e| PreferenceError::BadFile(e.to_string()))?;
    w.write_all(b"\n")?;
    for pair in pairs {
        serde_json::to_writer(&mut w, pair).map_err(|e| PreferenceError::BadFile(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs(path: &Path) -> Result<(Vec<PreferencePair>, FileMeta)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| PreferenceError::BadFile("empty pair file".into()))??;
    let meta = FileMeta::from_header(&header)
        .map_err(|e| PreferenceError::BadFile(format!("bad meta line: {e}")))?;
    let mut pairs = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: PreferencePair = serde_json::from_str(&line)
            .map_err(|e| PreferenceError::BadFile(format!("bad pair record: {e}")))?;
        if pair.chosen == pair.rejected {
            return Err(PreferenceError::BadFile(format!(
                "pair {} has identical sides",
                pair.example_id
            )));
        }
        pairs.push(pair);
    }
    Ok((pairs, meta))
}
