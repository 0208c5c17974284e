//! Reward-model interface and the judge adapter built on it.

/// Scores a (prompt, response) pair. Implementations must be
/// deterministic for fixed inputs.
pub trait RewardModel: Send + Sync {
    fn score(&self, prompt: &str, response: &str) -> f64;
    fn name(&self) -> &str;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preference {
    A,
    B,
    Tie,
}

/// Pairwise judge over two candidate responses.
pub trait Judge {
    fn judge(&self, prompt: &str, candidate_a: &str, candidate_b: &str) -> Preference;
}

/// Default adapter: A wins iff its reward score is strictly larger.
pub struct RewardJudge<'a>(pub &'a dyn RewardModel);

impl Judge for RewardJudge<'_> {
    fn judge(&self, prompt: &str, candidate_a: &str, candidate_b: &str) -> Preference {
        let a = self.0.score(prompt, candidate_a);
        let b = self.0.score(prompt, candidate_b);
        if a > b {
            Preference::A
        } else if b > a {
            Preference::B
        } else {
            Preference::Tie
        }
    }
}
