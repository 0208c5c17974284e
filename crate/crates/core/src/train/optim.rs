//! Adam with a linear-to-zero learning-rate schedule.

use crate::numerics::Tensor;

use super::config::ScheduleKind;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    /// One optimizer slot per trainable tensor, aligned by index.
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>], lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let t = self.t as f64;
        let bias1 = 1.0 - BETA1.powf(t);
        let bias2 = 1.0 - BETA2.powf(t);
        for (i, param) in params.iter_mut().enumerate() {
            let g = &grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            debug_assert_eq!(param.numel(), g.len());
            for (j, w) in param.data_mut().iter_mut().enumerate() {
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                *w -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}

/// Learning rate at `step` of `total` planned steps.
pub fn scheduled_lr(base: f64, schedule: ScheduleKind, step: usize, total: usize) -> f64 {
    match schedule {
        ScheduleKind::Constant => base,
        ScheduleKind::LinearToZero => {
            if total == 0 {
                base
            } else {
                base * (1.0 - step as f64 / total as f64)
            }
        }
    }
}
