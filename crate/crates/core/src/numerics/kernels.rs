//! Shared compute kernels. Both the forward pass and the backward pass
//! of the tape call into these, so a value computed during training is
//! bit-identical to the same value computed at inference time.

use super::tensor::Scalar;

/// C = A·B with A m×k, B k×n. ikj loop order so the inner loop runs
/// over contiguous rows of B and C.
pub fn matmul<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            let o_row = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                o_row[j] = o_row[j] + aip * b_row[j];
            }
        }
    }
    out
}

/// C = A·Bᵀ with A m×k, B n×k.
pub fn matmul_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for p in 0..k {
                acc = acc + a_row[p] * b_row[p];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// C = Aᵀ·B with A k×m, B k×n.
pub fn matmul_tn<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a_row[i];
            if api == F::zero() {
                continue;
            }
            let o_row = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                o_row[j] = o_row[j] + api * b_row[j];
            }
        }
    }
    out
}

pub fn transpose<F: Scalar>(a: &[F], rows: usize, cols: usize) -> Vec<F> {
    let mut out = vec![F::zero(); a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Row-wise temperature softmax with max subtraction.
pub fn softmax_rows<F: Scalar>(z: &[F], rows: usize, cols: usize, gamma: F) -> Vec<F> {
    let mut out = vec![F::zero(); z.len()];
    for r in 0..rows {
        let row = &z[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for (j, &v) in row.iter().enumerate() {
            let e = ((v - max) / gamma).exp();
            out[r * cols + j] = e;
            denom = denom + e;
        }
        for j in 0..cols {
            out[r * cols + j] = out[r * cols + j] / denom;
        }
    }
    out
}

/// Row-wise temperature log-softmax: (z_i - max)/γ - ln Σ exp((z_j - max)/γ).
pub fn log_softmax_rows<F: Scalar>(z: &[F], rows: usize, cols: usize, gamma: F) -> Vec<F> {
    let mut out = vec![F::zero(); z.len()];
    for r in 0..rows {
        let row = &z[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for &v in row.iter() {
            denom = denom + ((v - max) / gamma).exp();
        }
        let log_denom = denom.ln();
        for j in 0..cols {
            out[r * cols + j] = (row[j] - max) / gamma - log_denom;
        }
    }
    out
}

pub fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub fn l2_norm<F: Scalar>(x: &[F]) -> F {
    x.iter().fold(F::zero(), |acc, &v| acc + v * v).sqrt()
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        // [[1,0],[0,1]] × [[a,b],[c,d]] = [[a,b],[c,d]]
        let eye = [1.0, 0.0, 0.0, 1.0];
        let m = [3.5, -1.0, 2.0, 0.25];
        assert_eq!(matmul(&eye, &m, 2, 2, 2), m.to_vec());
    }

    #[test]
    fn matmul_hand_case() {
        // [[1,2]] × [[3],[4]] = [[11]]
        let out = matmul(&[1.0, 2.0], &[3.0, 4.0], 1, 2, 1);
        assert_eq!(out, vec![11.0]);
    }

    #[test]
    fn transposed_variants_agree_with_plain() {
        let a: Vec<f64> = (0..6).map(|i| i as f64 * 0.3 - 1.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect(); // 3x4
        let c = matmul(&a, &b, 2, 3, 4);
        let bt = transpose(&b, 3, 4);
        assert_eq!(matmul_nt(&a, &bt, 2, 3, 4), c);
        let at = transpose(&a, 2, 3);
        assert_eq!(matmul_tn(&at, &b, 2, 3, 4), c);
    }

    #[test]
    fn softmax_rows_are_normalized() {
        let p = softmax_rows(&[5.0, 1.0, 1.0, -2.0, 0.0, 3.0], 2, 3, 0.7);
        for r in 0..2 {
            let s: f64 = p[r * 3..(r + 1) * 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
