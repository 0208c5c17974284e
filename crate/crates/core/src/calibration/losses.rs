//! Calibration loss formulas on plain scalars. The training loop builds
//! the same expressions on the tape; tests pin the two together.

/// Hinge ranking loss: max(0, β − logp₊ + logp₋).
pub fn rank_loss(logp_plus: f64, logp_minus: f64, beta: f64) -> f64 {
    (beta - logp_plus + logp_minus).max(0.0)
}

/// Margin loss: max(0, β·(s₊ − s₋) − logp₊ + logp₋). The score terms
/// scale the required likelihood gap; they carry no gradient.
pub fn margin_loss(logp_plus: f64, logp_minus: f64, s_plus: f64, s_minus: f64, beta: f64) -> f64 {
    (beta * (s_plus - s_minus) - logp_plus + logp_minus).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rank_loss_hand_values() {
        // equal likelihoods leave the full margin
        assert_eq!(rank_loss(-2.0, -2.0, 1.0), 1.0);
        // a gap of 2 satisfies a margin of 1
        assert_eq!(rank_loss(-1.0, -3.0, 1.0), 0.0);
        // direct substitution
        assert!((rank_loss(-3.0, -2.5, 0.4) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn margin_loss_hand_values() {
        // equal scores collapse to the zero-margin hinge
        for (lp, lm) in [(-1.0, -2.0), (-2.0, -1.0), (0.5, 0.5)] {
            assert_eq!(margin_loss(lp, lm, 0.7, 0.7, 1.3), rank_loss(lp, lm, 0.0));
        }
        // unit score gap at β = 1 with equal likelihoods
        assert_eq!(margin_loss(-2.0, -2.0, 1.5, 0.5, 1.0), 1.0);
        // negative effective margin floors at zero
        assert_eq!(margin_loss(-2.0, -2.0, 0.2, 0.9, 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn rank_loss_nonnegative_and_zero_iff_gap_met(
            lp in -30.0..0.0f64,
            lm in -30.0..0.0f64,
            beta in 0.0..3.0f64,
        ) {
            let loss = rank_loss(lp, lm, beta);
            prop_assert!(loss >= 0.0);
            prop_assert_eq!(loss == 0.0, lp - lm >= beta);
        }

        #[test]
        fn rank_loss_is_1_lipschitz_in_each_argument(
            lp in -30.0..0.0f64,
            lm in -30.0..0.0f64,
            beta in 0.0..3.0f64,
            delta in -2.0..2.0f64,
        ) {
            let base = rank_loss(lp, lm, beta);
            prop_assert!((rank_loss(lp + delta, lm, beta) - base).abs() <= delta.abs() + 1e-12);
            prop_assert!((rank_loss(lp, lm + delta, beta) - base).abs() <= delta.abs() + 1e-12);
        }
    }
}
