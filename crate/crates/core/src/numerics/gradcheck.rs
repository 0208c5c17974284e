//! Central finite-difference gradient verification.
//!
//! The probe only ever evaluates forward passes, so it is independent of
//! the tape's backward implementation it is used to check.

use super::tensor::Tensor;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative-error denominator floor.
pub const DENOM_FLOOR: f64 = 1e-8;

/// Worst disagreement between an analytic gradient and central finite
/// differences of `f` over every element of every parameter tensor.
///
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
pub fn max_rel_error(
    params: &[Tensor],
    analytic: &[Vec<f64>],
    f: impl Fn(&[Tensor]) -> f64,
    h: f64,
) -> f64 {
    assert_eq!(params.len(), analytic.len(), "one gradient per parameter");
    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        assert_eq!(grad.len(), params[pi].numel());
        for j in 0..grad.len() {
            let orig = work[pi].data()[j];
            work[pi].data_mut()[j] = orig + h;
            let up = f(&work);
            work[pi].data_mut()[j] = orig - h;
            let down = f(&work);
            work[pi].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = grad[j].abs().max(numeric.abs()).max(DENOM_FLOOR);
            let rel = (grad[j] - numeric).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}
