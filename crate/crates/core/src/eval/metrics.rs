//! Win rate, ROUGE-1/2/L, and word counts. All functions are pure.

use std::collections::HashMap;

use super::reward::RewardModel;
use super::{EvalError, Result};

/// Percentage of prompts whose output the reward model strictly prefers
/// over the target. Ties count as losses.
pub fn win_rate(
    outputs: &[String],
    targets: &[String],
    prompts: &[String],
    reward: &dyn RewardModel,
) -> Result<f64> {
    if outputs.len() != targets.len() {
        return Err(EvalError::LengthMismatch(outputs.len(), targets.len()));
    }
    if outputs.len() != prompts.len() {
        return Err(EvalError::LengthMismatch(outputs.len(), prompts.len()));
    }
    if outputs.is_empty() {
        return Err(EvalError::Empty);
    }
    let wins = outputs
        .iter()
        .zip(targets)
        .zip(prompts)
        .filter(|((out, tgt), prompt)| reward.score(prompt, out) > reward.score(prompt, tgt))
        .count();
    Ok(100.0 * wins as f64 / outputs.len() as f64)
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Whitespace-split word count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N F-measure in percent: clipped n-gram overlap between
/// lowercased whitespace-split words.
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> f64 {
    assert!(n >= 1, "rouge_n needs n >= 1");
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        log::warn!("rouge_n over an empty text; scoring 0");
        return 0.0;
    }
    let c_counts = ngram_counts(&cand, n);
    let r_counts = ngram_counts(&refr, n);
    let c_total: usize = c_counts.values().sum();
    let r_total: usize = r_counts.values().sum();
    if c_total == 0 || r_total == 0 {
        return 0.0;
    }
    let overlap: usize = c_counts
        .iter()
        .map(|(gram, &c)| c.min(r_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let precision = overlap as f64 / c_total as f64;
    let recall = overlap as f64 / r_total as f64;
    f_measure(precision, recall)
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let (m, n) = (a.len(), b.len());
    let mut dp = vec![0usize; (m + 1) * (n + 1)];
    for i in 1..=m {
        for j in 1..=n {
            dp[i * (n + 1) + j] = if a[i - 1] == b[j - 1] {
                dp[(i - 1) * (n + 1) + j - 1] + 1
            } else {
                dp[(i - 1) * (n + 1) + j].max(dp[i * (n + 1) + j - 1])
            };
        }
    }
    dp[m * (n + 1) + n]
}

/// ROUGE-L F-measure in percent: longest-common-subsequence based.
pub fn rouge_l(candidate: &str, reference: &str) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        log::warn!("rouge_l over an empty text; scoring 0");
        return 0.0;
    }
    let lcs = lcs_len(&cand, &refr) as f64;
    let precision = lcs / cand.len() as f64;
    let recall = lcs / refr.len() as f64;
    f_measure(precision, recall)
}

fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * precision * recall / (precision + recall)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    pearson(&rx, &ry)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        dx += (x - mx) * (x - mx);
        dy += (y - my) * (y - my);
    }
    if dx == 0.0 || dy == 0.0 {
        0.0
    } else {
        num / (dx * dy).sqrt()
    }
}
