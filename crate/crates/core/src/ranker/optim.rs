//! AdamW with linear warmup and linear decay.

use serde::{Deserialize, Serialize};

use crate::params::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Fraction of total steps spent warming up.
    pub warmup: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup: 0.1,
        }
    }
}

/// Learning-rate multiplier for 0-based `step` of `total`: rises linearly
/// to 1 over the warmup steps (the first step already nonzero), then falls
/// linearly to 0 at `total`.
pub fn lr_factor(step: usize, total: usize, warmup: f64) -> f64 {
    let warm = (warmup * total as f64).round() as usize;
    if step < warm {
        (step + 1) as f64 / warm as f64
    } else if total <= warm {
        1.0
    } else {
        ((total - step) as f64 / (total - warm) as f64).clamp(0.0, 1.0)
    }
}

pub struct AdamW {
    pub config: AdamWConfig,
    total_steps: usize,
    step: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, num_params: usize, total_steps: usize) -> Self {
        Self {
            config,
            total_steps: total_steps.max(1),
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr * lr_factor(self.step, self.total_steps, self.config.warmup)
    }

    /// One update of `params` from gradients `grads` of the same layout.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        let c = self.config;
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let g = grads.flatten();
        assert_eq!(g.len(), self.m.len(), "gradient size does not match optimizer state");
        let (m, v) = (&mut self.m, &mut self.v);
        let mut off = 0;
        params.visit_mut(&mut |_, tensor| {
            for (j, p) in tensor.iter_mut().enumerate() {
                let i = off + j;
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *p -= lr * (mhat / (vhat.sqrt() + c.eps) + c.weight_decay * *p);
            }
            off += tensor.len();
        });
    }
}
