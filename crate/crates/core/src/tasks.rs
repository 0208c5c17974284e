//! Synthetic extraction task with a programmatic oracle reward.
//!
//! Prompts interleave "key" symbols with noise symbols; the target is
//! the in-order subsequence of key symbols (a toy extractive summary).
//! The oracle rewards key-token F1 damped by a brevity factor, so win
//! rates cannot be gamed by verbosity.

use std::collections::BTreeSet;
use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eval::RewardModel;
use crate::lm::vocab::Vocabulary;

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("invalid task spec: {0}")]
    BadSpec(String),
    #[error("could not draw a fresh prompt after {0} attempts; loosen the spec")]
    Exhausted(usize),
}

pub type Result<T> = std::result::Result<T, TaskError>;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SplitSizes {
    pub train: usize,
    pub distill: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TaskSpec {
    /// Total vocabulary size M, special tokens included.
    pub vocab_size: usize,
    pub n_key_symbols: usize,
    pub prompt_len_min: usize,
    pub prompt_len_max: usize,
    /// Probability that a prompt position carries a noise symbol.
    pub noise_rate: f64,
    pub splits: SplitSizes,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            vocab_size: 19,
            n_key_symbols: 8,
            prompt_len_min: 8,
            prompt_len_max: 12,
            noise_rate: 0.35,
            splits: SplitSizes {
                train: 256,
                distill: 256,
                dev: 64,
                test: 128,
            },
            seed: 0,
        }
    }
}

pub const N_SPECIAL_TOKENS: usize = 3;

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_key_symbols == 0 {
            return Err(TaskError::BadSpec("n_key_symbols must be >= 1".into()));
        }
        if self.vocab_size < N_SPECIAL_TOKENS + self.n_key_symbols + 1 {
            return Err(TaskError::BadSpec(format!(
                "vocab_size {} leaves no noise symbols after {} specials and {} keys",
                self.vocab_size, N_SPECIAL_TOKENS, self.n_key_symbols
            )));
        }
        if self.prompt_len_min == 0 || self.prompt_len_min > self.prompt_len_max {
            return Err(TaskError::BadSpec(format!(
                "bad prompt length range [{}, {}]",
                self.prompt_len_min, self.prompt_len_max
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(TaskError::BadSpec(format!(
                "noise_rate {} outside [0,1]",
                self.noise_rate
            )));
        }
        for (name, n) in [
            ("train", self.splits.train),
            ("distill", self.splits.distill),
            ("dev", self.splits.dev),
            ("test", self.splits.test),
        ] {
            if n == 0 {
                return Err(TaskError::BadSpec(format!("split {name} must be > 0")));
            }
        }
        Ok(())
    }

    /// Prompt plus its longest possible target must fit the model
    /// context: BOS + prompt + target ≤ max_len.
    pub fn validate_against_context(&self, max_len: usize) -> Result<()> {
        let needed = 1 + 2 * self.prompt_len_max + 1; // worst case all-key prompt + EOS
        if needed > max_len {
            return Err(TaskError::BadSpec(format!(
                "prompt length {} needs context {needed} > model max_len {max_len}",
                self.prompt_len_max
            )));
        }
        Ok(())
    }

    pub fn key_symbols(&self) -> Vec<String> {
        (0..self.n_key_symbols).map(|i| format!("k{i}")).collect()
    }

    pub fn noise_symbols(&self) -> Vec<String> {
        (0..self.vocab_size - N_SPECIAL_TOKENS - self.n_key_symbols)
            .map(|i| format!("n{i}"))
            .collect()
    }

    /// The vocabulary is a pure function of the spec.
    pub fn vocabulary(&self) -> Vocabulary {
        let mut content = self.key_symbols();
        content.extend(self.noise_symbols());
        Vocabulary::with_content(content).expect("spec symbols are distinct")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Example {
    pub id: u64,
    pub prompt: String,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<Example>,
    pub distill: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
}

impl Corpus {
    pub fn splits(&self) -> [(&'static str, &Vec<Example>); 4] {
        [
            ("train", &self.train),
            ("distill", &self.distill),
            ("dev", &self.dev),
            ("test", &self.test),
        ]
    }
}

const MAX_DRAW_ATTEMPTS: usize = 10_000;

/// Deterministic corpus generation: ids run sequentially across the
/// train/distill/dev/test splits and prompts are globally distinct.
pub fn generate_corpus(spec: &TaskSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let keys = spec.key_symbols();
    let noise = spec.noise_symbols();
    let mut seen: HashSet<String> = HashSet::new();
    let mut next_id = 0u64;
    let mut draw_split = |count: usize, rng: &mut ChaCha8Rng| -> Result<Vec<Example>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut attempts = 0;
            let (prompt, target) = loop {
                attempts += 1;
                if attempts > MAX_DRAW_ATTEMPTS {
                    return Err(TaskError::Exhausted(MAX_DRAW_ATTEMPTS));
                }
                let candidate = draw_example(spec, &keys, &noise, rng);
                if let Some(pair) = candidate {
                    if seen.insert(pair.0.clone()) {
                        break pair;
                    }
                }
            };
            out.push(Example {
                id: next_id,
                prompt,
                target,
            });
            next_id += 1;
        }
        Ok(out)
    };
    let train = draw_split(spec.splits.train, &mut rng)?;
    let distill = draw_split(spec.splits.distill, &mut rng)?;
    let dev = draw_split(spec.splits.dev, &mut rng)?;
    let test = draw_split(spec.splits.test, &mut rng)?;
    Ok(Corpus {
        train,
        distill,
        dev,
        test,
    })
}

/// One prompt/target draw; `None` when the prompt came out key-free.
fn draw_example(
    spec: &TaskSpec,
    keys: &[String],
    noise: &[String],
    rng: &mut ChaCha8Rng,
) -> Option<(String, String)> {
    let len = rng.gen_range(spec.prompt_len_min..=spec.prompt_len_max);
    let mut prompt = Vec::with_capacity(len);
    let mut target = Vec::new();
    for _ in 0..len {
        let is_noise = !noise.is_empty() && rng.gen::<f64>() < spec.noise_rate;
        if is_noise {
            prompt.push(noise[rng.gen_range(0..noise.len())].clone());
        } else {
            let k = keys[rng.gen_range(0..keys.len())].clone();
            prompt.push(k.clone());
            target.push(k);
        }
    }
    if target.is_empty() {
        return None;
    }
    Some((prompt.join(" "), target.join(" ")))
}

/// Programmatic stand-in for a task-specific reward model: multiset F1
/// between the response symbols and the prompt's true key subsequence,
/// times a brevity factor min(1, L_target/L_response). Bounded in [0,1]
/// and exactly 1 on the target itself.
#[derive(Clone, Debug)]
pub struct OracleReward {
    key_symbols: BTreeSet<String>,
    pub f1_weight: f64,
    pub brevity_weight: f64,
}

impl OracleReward {
    pub fn new(spec: &TaskSpec) -> Self {
        Self {
            key_symbols: spec.key_symbols().into_iter().collect(),
            f1_weight: 1.0,
            brevity_weight: 1.0,
        }
    }

    fn key_projection<'a>(&self, prompt: &'a str) -> Vec<&'a str> {
        prompt
            .split_whitespace()
            .filter(|t| self.key_symbols.contains(*t))
            .collect()
    }
}

fn multiset_overlap(a: &[&str], b: &[&str]) -> usize {
    let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for t in b {
        *counts.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0;
    for t in a {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    overlap
}

impl RewardModel for OracleReward {
    fn score(&self, prompt: &str, response: &str) -> f64 {
        let truth = self.key_projection(prompt);
        let stripped = Vocabulary::strip_special_symbols(response);
        let resp: Vec<&str> = stripped.split_whitespace().collect();
        if truth.is_empty() || resp.is_empty() {
            return 0.0;
        }
        let overlap = multiset_overlap(&resp, &truth) as f64;
        if overlap == 0.0 {
            return 0.0;
        }
        let precision = overlap / resp.len() as f64;
        let recall = overlap / truth.len() as f64;
        let f1 = 2.0 * precision * recall / (precision + recall);
        let brevity = (truth.len() as f64 / resp.len() as f64).min(1.0);
        f1.powf(self.f1_weight) * brevity.powf(self.brevity_weight)
    }

    fn name(&self) -> &str {
        "oracle-key-f1-brevity"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> TaskSpec {
        TaskSpec {
            vocab_size: 10,
            n_key_symbols: 4,
            prompt_len_min: 4,
            prompt_len_max: 6,
            noise_rate: 0.4,
            splits: SplitSizes {
                train: 12,
                distill: 12,
                dev: 6,
                test: 8,
            },
            seed: 5,
        }
    }

    #[test]
    fn zero_noise_makes_target_equal_prompt() {
        let mut spec = small_spec();
        spec.noise_rate = 0.0;
        let corpus = generate_corpus(&spec).unwrap();
        for (_, split) in corpus.splits() {
            for ex in split {
                assert_eq!(ex.prompt, ex.target);
            }
        }
    }

    #[test]
    fn corpus_is_deterministic_and_disjoint() {
        let spec = small_spec();
        let a = generate_corpus(&spec).unwrap();
        let b = generate_corpus(&spec).unwrap();
        assert_eq!(a, b);
        let mut prompts = HashSet::new();
        let mut ids = HashSet::new();
        for (_, split) in a.splits() {
            for ex in split {
                assert!(prompts.insert(ex.prompt.clone()), "prompt reused");
                assert!(ids.insert(ex.id), "id reused");
            }
        }
    }

    #[test]
    fn targets_are_inorder_key_subsequences() {
        let spec = small_spec();
        let reward = OracleReward::new(&spec);
        let corpus = generate_corpus(&spec).unwrap();
        for ex in &corpus.train {
            let projection = reward.key_projection(&ex.prompt).join(" ");
            assert_eq!(projection, ex.target);
        }
    }

    #[test]
    fn reward_of_target_is_exactly_one() {
        let spec = small_spec();
        let reward = OracleReward::new(&spec);
        let corpus = generate_corpus(&spec).unwrap();
        for ex in corpus.train.iter().take(8) {
            assert_eq!(reward.score(&ex.prompt, &ex.target), 1.0);
        }
    }

    #[test]
    fn reward_edge_cases() {
        let spec = small_spec();
        let reward = OracleReward::new(&spec);
        let prompt = "k0 n1 k2 k3 n0";
        assert_eq!(reward.score(prompt, ""), 0.0);
        assert_eq!(reward.score(prompt, "n0 n1"), 0.0);
        // EOS markers are ignored
        assert_eq!(reward.score(prompt, "k0 k2 k3 <eos>"), 1.0);
    }

    #[test]
    fn reward_hand_computed_spurious_symbol() {
        // target k0 k1 k2 k3 (L=4); response adds one spurious symbol:
        // F1 = 2·(4/5)·1/(4/5+1) = 8/9, brevity 4/5 → 32/45 ≈ 0.7111
        let reward = OracleReward::new(&TaskSpec::default());
        let prompt = "k0 k1 k2 k3";
        let resp = "k0 k1 k2 k3 n0";
        let got = reward.score(prompt, resp);
        assert!((got - 32.0 / 45.0).abs() < 1e-12, "got {got}");
        assert!((got - 0.7111).abs() < 1e-4);
    }

    #[test]
    fn single_edits_strictly_reduce_reward() {
        // exhaustive single insertion/deletion/substitution check
        let spec = small_spec();
        let reward = OracleReward::new(&spec);
        let prompt = "k0 n1 k1 k2 n0 k1";
        let target = "k0 k1 k2 k1";
        assert_eq!(reward.score(prompt, target), 1.0);
        let tokens: Vec<&str> = target.split_whitespace().collect();
        let all_symbols: Vec<String> = spec
            .key_symbols()
            .into_iter()
            .chain(spec.noise_symbols())
            .collect();
        let mut variants: Vec<Vec<&str>> = Vec::new();
        for i in 0..tokens.len() {
            let mut del = tokens.clone();
            del.remove(i);
            variants.push(del);
            for s in &all_symbols {
                let mut sub = tokens.clone();
                sub[i] = s;
                variants.push(sub);
            }
        }
        for i in 0..=tokens.len() {
            for s in &all_symbols {
                let mut ins = tokens.clone();
                ins.insert(i, s);
                variants.push(ins);
            }
        }
        for v in variants {
            let text = v.join(" ");
            if text == target {
                continue;
            }
            let got = reward.score(prompt, &text);
            assert!(
                got < 1.0,
                "edit {text:?} should score below the target, got {got}"
            );
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut spec = small_spec();
        spec.vocab_size = 7; // 3 specials + 4 keys, no noise symbols
        assert!(spec.validate().is_err());
        let mut spec = small_spec();
        spec.prompt_len_min = 9;
        assert!(spec.validate().is_err());
        let spec = small_spec();
        assert!(spec.validate_against_context(10).is_err());
        assert!(spec.validate_against_context(48).is_ok());
    }
}
