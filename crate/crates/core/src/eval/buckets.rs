//! Win-rate deltas grouped by generation length.

use serde::{Deserialize, Serialize};

use super::metrics::{win_rate, word_count};
use super::reward::RewardModel;
use super::{EvalError, Result};

/// Default word-count bucket edges; the last bucket is open-ended.
pub const DEFAULT_BUCKET_EDGES: [usize; 5] = [0, 10, 20, 30, 40];

pub const LOW_SUPPORT_THRESHOLD: usize = 5;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BucketRow {
    /// Inclusive at the lower edge for the first bucket, exclusive after.
    pub lo: usize,
    /// Upper edge (inclusive); `None` marks the open-ended final bucket.
    pub hi: Option<usize>,
    pub count: usize,
    /// win_rate(method) − win_rate(initial student) inside the bucket,
    /// absent when the bucket is empty.
    pub delta_win_rate: Option<f64>,
    pub low_support: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BucketTable {
    pub rows: Vec<BucketRow>,
    pub total: usize,
}

/// Groups eval examples by the method output's word count and reports,
/// per bucket, the method's win rate minus the initial student's win
/// rate over the same examples.
pub fn length_bucketed_delta_win_rate(
    method_outputs: &[String],
    initial_outputs: &[String],
    targets: &[String],
    prompts: &[String],
    reward: &dyn RewardModel,
    edges: &[usize],
) -> Result<BucketTable> {
    let n = method_outputs.len();
    for (len, other) in [
        (initial_outputs.len(), "initial"),
        (targets.len(), "targets"),
        (prompts.len(), "prompts"),
    ] {
        if len != n {
            log::debug!("length mismatch against {other}");
            return Err(EvalError::LengthMismatch(n, len));
        }
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let mut bounds: Vec<(usize, Option<usize>)> = Vec::new();
    for w in edges.windows(2) {
        bounds.push((w[0], Some(w[1])));
    }
    bounds.push((*edges.last().unwrap_or(&0), None));

    let mut rows = Vec::with_capacity(bounds.len());
    for (bi, &(lo, hi)) in bounds.iter().enumerate() {
        let member = |wc: usize| -> bool {
            let above = if bi == 0 { wc >= lo } else { wc > lo };
            above && hi.map_or(true, |h| wc <= h)
        };
        let idx: Vec<usize> = (0..n)
            .filter(|&i| member(word_count(&method_outputs[i])))
            .collect();
        let delta_win_rate = if idx.is_empty() {
            None
        } else {
            let pick = |src: &[String]| -> Vec<String> {
                idx.iter().map(|&i| src[i].clone()).collect()
            };
            let m = win_rate(
                &pick(method_outputs),
                &pick(targets),
                &pick(prompts),
                reward,
            )?;
            let s = win_rate(
                &pick(initial_outputs),
                &pick(targets),
                &pick(prompts),
                reward,
            )?;
            Some(m - s)
        };
        rows.push(BucketRow {
            lo,
            hi,
            count: idx.len(),
            delta_win_rate,
            low_support: idx.len() < LOW_SUPPORT_THRESHOLD,
        });
    }
    Ok(BucketTable { rows, total: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::reward::RewardModel;

    struct MarkerReward;
    impl RewardModel for MarkerReward {
        // any response containing "win" scores 1, targets score 0.5
        fn score(&self, _: &str, response: &str) -> f64 {
            if response.contains("win") {
                1.0
            } else if response.contains("tgt") {
                0.5
            } else {
                0.0
            }
        }
        fn name(&self) -> &str {
            "marker"
        }
    }

    fn words(n: usize, base: &str) -> String {
        vec![base; n].join(" ")
    }

    #[test]
    fn delta_is_zero_when_method_equals_initial() {
        let outputs: Vec<String> = (1..=12).map(|i| words(i * 4, "x")).collect();
        let targets: Vec<String> = (1..=12).map(|_| "tgt".to_string()).collect();
        let prompts: Vec<String> = (1..=12).map(|i| format!("p{i}")).collect();
        let table = length_bucketed_delta_win_rate(
            &outputs,
            &outputs.clone(),
            &targets,
            &prompts,
            &MarkerReward,
            &DEFAULT_BUCKET_EDGES,
        )
        .unwrap();
        assert_eq!(table.total, 12);
        let populated: usize = table.rows.iter().map(|r| r.count).sum();
        assert_eq!(populated, 12);
        for row in &table.rows {
            if let Some(d) = row.delta_win_rate {
                assert_eq!(d, 0.0);
            }
        }
    }

    #[test]
    fn gain_shows_only_in_the_bucket_that_wins() {
        // method wins exactly on examples whose outputs land in (20,30]
        let mut method = Vec::new();
        let mut initial = Vec::new();
        for wc in [5usize, 15, 25, 28, 35, 45] {
            let in_target_bucket = (21..=30).contains(&wc);
            method.push(if in_target_bucket {
                format!("win {}", words(wc - 1, "x"))
            } else {
                words(wc, "x")
            });
            initial.push(words(wc, "y"));
        }
        let targets: Vec<String> = (0..6).map(|_| "tgt".to_string()).collect();
        let prompts: Vec<String> = (0..6).map(|i| format!("p{i}")).collect();
        let table = length_bucketed_delta_win_rate(
            &method,
            &initial,
            &targets,
            &prompts,
            &MarkerReward,
            &DEFAULT_BUCKET_EDGES,
        )
        .unwrap();
        for row in &table.rows {
            let delta = row.delta_win_rate.unwrap_or(0.0);
            if row.lo == 20 {
                assert!(delta > 0.0, "expected gain in (20,30], got {delta}");
            } else {
                assert_eq!(delta, 0.0, "unexpected delta in bucket {}+", row.lo);
            }
        }
        assert!(table.rows.iter().all(|r| (r.count < 5) == r.low_support));
    }
}
