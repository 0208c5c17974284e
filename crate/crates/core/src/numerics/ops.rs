//! Tape-free tensor operations used on inference paths.

use super::kernels;
use super::tensor::{Scalar, Tensor};
use super::{NumericsError, Result};

/// Temperature softmax over a vector of logits:
/// p_i = exp(z_i/γ) / Σ_j exp(z_j/γ), computed with max subtraction.
pub fn softmax_temperature<F: Scalar>(z: &Tensor<F>, gamma: F) -> Result<Tensor<F>> {
    if gamma <= F::zero() {
        return Err(NumericsError::InvalidTemperature(gamma.as_f64()));
    }
    if z.numel() == 0 {
        return Err(NumericsError::Invalid("softmax of empty logits".into()));
    }
    let values = kernels::softmax_rows(z.data(), 1, z.numel(), gamma);
    Tensor::new(z.shape().to_vec(), values)
}

/// Plain (non-taped) matrix product.
pub fn matmul<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    if a.shape().len() != 2 {
        return Err(NumericsError::NotAMatrix {
            op: "matmul",
            shape: a.shape().to_vec(),
        });
    }
    if b.shape().len() != 2 {
        return Err(NumericsError::NotAMatrix {
            op: "matmul",
            shape: b.shape().to_vec(),
        });
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(NumericsError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Tensor::new(vec![m, n], kernels::matmul(a.data(), b.data(), m, k, n))
}

/// Index of the largest element, first index on ties.
pub fn argmax<F: Scalar>(values: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_logits() {
        let z = Tensor::<f64>::new(vec![4], vec![2.5; 4]).unwrap();
        for gamma in [0.1, 1.0, 7.0] {
            let p = softmax_temperature(&z, gamma).unwrap();
            for &v in p.data() {
                assert!((v - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_closed_form_two_logits() {
        // z = [1, 0], γ = 1 → [e/(e+1), 1/(e+1)]
        let z = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let p = softmax_temperature(&z, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p.data()[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn softmax_sharp_temperature_concentrates() {
        // z = [5,1,1], γ = 0.1: closed form gives the argmax component
        // weight 1/(1 + 2e^{-40}) > 1 − 1e-10.
        let z = Tensor::new(vec![3], vec![5.0, 1.0, 1.0]).unwrap();
        let p = softmax_temperature(&z, 0.1).unwrap();
        assert!(p.data()[0] > 1.0 - 1e-10);
    }

    #[test]
    fn softmax_rejects_nonpositive_temperature() {
        let z = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            softmax_temperature(&z, 0.0),
            Err(NumericsError::InvalidTemperature(_))
        ));
        assert!(softmax_temperature(&z, -1.0).is_err());
    }

    #[test]
    fn argmax_first_index_tie_break() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
