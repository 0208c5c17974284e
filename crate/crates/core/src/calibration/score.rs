//! Embedding-based n-gram similarity between a candidate and a
//! reference, greedy-matched per gram: for each order n, n-gram
//! embeddings are mean-pooled token embeddings (re-normalized), P_n
//! averages each candidate gram's best match in the reference, R_n
//! averages each reference gram's best match in the candidate, and
//! F_n = 2·P_n·R_n/(P_n+R_n). The total score is Σ_{n≤n_max} F_n.
//!
//! Token embeddings come from the student's own final layer, so scoring
//! adds no external model.

use crate::lm::{hidden_embeddings, LanguageModel, TokenSequence};
use crate::numerics::kernels;

use super::Result;

/// Mean-pool each length-n window and re-normalize to unit length.
fn ngram_embeddings(tokens: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    if tokens.len() < n {
        return Vec::new();
    }
    let d = tokens[0].len();
    tokens
        .windows(n)
        .map(|w| {
            let mut pooled = vec![0.0; d];
            for e in w {
                for (slot, v) in pooled.iter_mut().zip(e) {
                    *slot += v;
                }
            }
            for v in pooled.iter_mut() {
                *v /= n as f64;
            }
            let norm = kernels::l2_norm(&pooled);
            if norm > 1e-30 {
                for v in pooled.iter_mut() {
                    *v /= norm;
                }
            }
            pooled
        })
        .collect()
}

/// Best clamped cosine match of `gram` inside `pool`; 0 when the pool is
/// empty or nothing correlates positively.
fn best_match(gram: &[f64], pool: &[Vec<f64>]) -> f64 {
    pool.iter()
        .map(|other| kernels::dot(gram, other).max(0.0))
        .fold(0.0, f64::max)
}

/// Score over pre-computed unit token embeddings. Orders with no grams
/// on either side contribute a defined zero.
pub fn score_from_embeddings(
    candidate: &[Vec<f64>],
    reference: &[Vec<f64>],
    n_max: usize,
) -> f64 {
    assert!(n_max >= 1, "n_max must be >= 1");
    let mut total = 0.0;
    for n in 1..=n_max {
        let cand = ngram_embeddings(candidate, n);
        let refr = ngram_embeddings(reference, n);
        if cand.is_empty() || refr.is_empty() {
            continue; // F_n = 0
        }
        let p: f64 =
            cand.iter().map(|g| best_match(g, &refr)).sum::<f64>() / cand.len() as f64;
        let r: f64 =
            refr.iter().map(|g| best_match(g, &cand)).sum::<f64>() / refr.len() as f64;
        if p + r > 0.0 {
            total += 2.0 * p * r / (p + r);
        }
    }
    total
}

fn strip_trailing_eos(seq: &TokenSequence, eos: u32) -> TokenSequence {
    let mut ids = seq.ids.clone();
    while ids.last() == Some(&eos) {
        ids.pop();
    }
    TokenSequence::output(ids)
}

/// s(ŷ; ref; x): similarity of a candidate against the reference, both
/// embedded by the student conditioned on the prompt. Bounded in
/// [0, n_max]; a candidate that is exactly the reference scores n_max
/// whenever its length reaches n_max.
pub fn score(
    y_hat: &TokenSequence,
    reference: &TokenSequence,
    x: &TokenSequence,
    student: &LanguageModel,
    n_max: usize,
) -> Result<f64> {
    let eos = student.vocab.eos();
    let cand = strip_trailing_eos(y_hat, eos);
    let refr = strip_trailing_eos(reference, eos);
    if cand.is_empty() || refr.is_empty() {
        return Ok(0.0); // a bare-EOS sample has nothing to match
    }
    if n_max > cand.len() && n_max > refr.len() {
        log::warn!(
            "score: n_max {n_max} exceeds both sequence lengths ({}, {}); higher orders are zero",
            cand.len(),
            refr.len()
        );
    }
    let x_for_ctx = TokenSequence::prompt(x.ids.clone());
    let e_cand = hidden_embeddings(student, &cand, &x_for_ctx)?;
    let e_ref = hidden_embeddings(student, &refr, &x_for_ctx)?;
    Ok(score_from_embeddings(&e_cand, &e_ref, n_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = kernels::l2_norm(v);
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn identical_sequences_score_n_max() {
        let e = vec![unit(&[1.0, 0.2]), unit(&[0.3, 1.0]), unit(&[-0.5, 0.8])];
        let s = score_from_embeddings(&e, &e, 2);
        assert!((s - 2.0).abs() < 1e-12);
        let s3 = score_from_embeddings(&e, &e, 3);
        assert!((s3 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_embeddings_score_zero() {
        let a = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]];
        let b = vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]];
        assert_eq!(score_from_embeddings(&a, &b, 2), 0.0);
    }

    #[test]
    fn negative_similarities_clamp_to_zero() {
        let a = vec![vec![1.0, 0.0]];
        let b = vec![vec![-1.0, 0.0]];
        assert_eq!(score_from_embeddings(&a, &b, 1), 0.0);
    }

    #[test]
    fn orders_beyond_both_lengths_contribute_zero() {
        let a = vec![vec![1.0, 0.0]];
        let b = vec![vec![1.0, 0.0]];
        // n = 1 matches perfectly, n = 2 has no grams on either side
        let s = score_from_embeddings(&a, &b, 2);
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_greedy_matching_fixture() {
        // Candidate tokens (2-d unit vectors): e1 = (1,0), e2 = (0,1),
        // e3 = (1,0). Reference: r1 = (1,0), r2 = (0.6, 0.8).
        //
        // Order 1 (token grams):
        //   cand best matches: e1→r1 = 1, e2→r2 = 0.8, e3→r1 = 1 → P1 = 14/15
        //   ref best matches:  r1→e1 = 1, r2→e2 = 0.8          → R1 = 0.9
        //   F1 = 2·(14/15)·0.9 / (14/15 + 0.9) = 84/275·... computed below.
        //
        // Order 2 (mean-pooled, re-normalized):
        //   cand grams: m1 = (e1+e2)/2 → unit (1,1)/√2;
        //               m2 = (e2+e3)/2 → unit (1,1)/√2
        //   ref gram:   n1 = (r1+r2)/2 = (0.8, 0.4) → unit (2,1)/√5
        //   dot(m1, n1) = 3/√10 for both cand grams
        //   P2 = 3/√10, R2 = 3/√10 → F2 = 3/√10.
        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        let e3 = vec![1.0, 0.0];
        let r1 = vec![1.0, 0.0];
        let r2 = vec![0.6, 0.8];
        let cand = vec![e1, e2, e3];
        let refr = vec![r1, r2];

        let p1: f64 = (1.0 + 0.8 + 1.0) / 3.0;
        let r1_: f64 = (1.0 + 0.8) / 2.0;
        let f1 = 2.0 * p1 * r1_ / (p1 + r1_);
        let f2 = 3.0 / 10f64.sqrt();

        let s1 = score_from_embeddings(&cand, &refr, 1);
        assert!((s1 - f1).abs() < 1e-9, "F1: got {s1}, want {f1}");
        let s2 = score_from_embeddings(&cand, &refr, 2);
        assert!((s2 - (f1 + f2)).abs() < 1e-9, "F1+F2: got {s2}");
    }
}
