//! Huber loss, Adam with classic coupled weight decay, and a
//! reduce-on-plateau learning-rate scheduler.

use serde::{Deserialize, Serialize};

use super::model::{Gradients, ModelParams};

/// Mean Huber loss: 0.5 r^2 for |r| <= delta, delta (|r| - delta/2) beyond.
pub fn huber_loss(pred: &[f64], target: &[f64], delta: f64) -> f64 {
    assert_eq!(pred.len(), target.len());
    let n = pred.len() as f64;
    pred.iter()
        .zip(target.iter())
        .map(|(&p, &t)| {
            let r = (p - t).abs();
            if r <= delta {
                0.5 * r * r
            } else {
                delta * (r - 0.5 * delta)
            }
        })
        .sum::<f64>()
        / n
}

/// d(mean Huber)/d(pred); continuous at |r| = delta.
pub fn huber_grad(pred: &[f64], target: &[f64], delta: f64) -> Vec<f64> {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target.iter())
        .map(|(&p, &t)| {
            let r = p - t;
            let g = if r.abs() <= delta { r } else { delta * r.signum() };
            g / n
        })
        .collect()
}

/// Adam with bias correction. Weight decay is the classic coupled form:
/// lambda * w is added to the gradient before the moment updates.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
    m: Vec<ndarray::Array2<f64>>,
    v: Vec<ndarray::Array2<f64>>,
}

impl Adam {
    pub fn new(params: &ModelParams, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        let zeros = || {
            params
                .tensors
                .iter()
                .map(|t| ndarray::Array2::zeros(t.raw_dim()))
                .collect::<Vec<_>>()
        };
        Adam { beta1, beta2, eps, weight_decay, step: 0, m: zeros(), v: zeros() }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((w, g), (m, v)) in params
            .tensors
            .iter_mut()
            .zip(grads.tensors.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            ndarray::Zip::from(w)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    let g = g + self.weight_decay * *w;
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
                });
        }
    }
}

/// Multiplies the learning rate by `factor` when the monitored value has
/// not improved for more than `patience` consecutive epochs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    pub lr: f64,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, min_lr: f64) -> Self {
        PlateauScheduler { factor, patience, min_lr, lr, best: f64::INFINITY, stale: 0 }
    }

    /// Record one epoch's monitored value; returns the learning rate to use
    /// next.
    pub fn observe(&mut self, value: f64) -> f64 {
        if value < self.best {
            self.best = value;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale > self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.stale = 0;
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::model::ModelConfig;

    #[test]
    fn huber_values() {
        assert_eq!(huber_loss(&[1.0], &[1.0], 1.0), 0.0);
        assert!((huber_loss(&[0.5], &[0.0], 1.0) - 0.125).abs() < 1e-15);
        assert!((huber_loss(&[2.0], &[0.0], 1.0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn huber_gradient_is_continuous_at_delta() {
        let below = huber_grad(&[0.999_999], &[0.0], 1.0)[0];
        let above = huber_grad(&[1.000_001], &[0.0], 1.0)[0];
        assert!((below - above).abs() < 1e-5);
    }

    #[test]
    fn adam_leaves_params_alone_for_zero_grads() {
        let cfg = ModelConfig::default();
        let mut params = ModelParams::init(&cfg, 1);
        let before = params.clone();
        let grads = params.zeros_like();
        let mut adam = Adam::new(&params, 0.9, 0.999, 1e-8, 0.0);
        adam.step(&mut params, &grads, 1e-3);
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // Scalar w = 0, g = 1: bias-corrected first step moves by exactly lr.
        let cfg = ModelConfig {
            node_dim: 1,
            heads: 1,
            head_dim: 1,
            global_dim: 1,
            global_hidden: 1,
            reg_hidden1: 1,
            reg_hidden2: 1,
        };
        let mut params = ModelParams::init(&cfg, 0);
        for t in &mut params.tensors {
            t.fill(0.0);
        }
        let mut grads = params.zeros_like();
        for g in &mut grads.tensors {
            g.fill(1.0);
        }
        let mut adam = Adam::new(&params, 0.9, 0.999, 1e-8, 0.0);
        let lr = 1e-4;
        adam.step(&mut params, &grads, lr);
        for t in &params.tensors {
            for &w in t.iter() {
                assert!((w + lr).abs() < 1e-9, "step was {w}");
            }
        }
    }

    #[test]
    fn weight_decay_shrinks_weights_without_gradients() {
        let cfg = ModelConfig::default();
        let mut params = ModelParams::init(&cfg, 5);
        let norm_before: f64 = params.tensors[0].iter().map(|v| v * v).sum();
        let grads = params.zeros_like();
        let mut adam = Adam::new(&params, 0.9, 0.999, 1e-8, 1e-2);
        for _ in 0..5 {
            adam.step(&mut params, &grads, 1e-3);
        }
        let norm_after: f64 = params.tensors[0].iter().map(|v| v * v).sum();
        assert!(norm_after < norm_before);
    }

    #[test]
    fn plateau_reduces_after_patience() {
        let mut sched = PlateauScheduler::new(1e-4, 0.1, 2, 1e-7);
        assert_eq!(sched.observe(1.0), 1e-4);
        assert_eq!(sched.observe(0.9), 1e-4); // improvement
        assert_eq!(sched.observe(0.95), 1e-4); // stale 1
        assert_eq!(sched.observe(0.95), 1e-4); // stale 2
        let lr = sched.observe(0.95); // stale 3 > patience
        assert!((lr - 1e-5).abs() < 1e-20);
        // Floor at min_lr.
        let mut sched = PlateauScheduler::new(1e-6, 0.1, 0, 1e-7);
        sched.observe(1.0);
        sched.observe(1.0);
        sched.observe(1.0);
        assert!(sched.lr >= 1e-7);
    }
}
