//! Adam with bias correction and the warm-restart cosine learning-rate
//! schedule.

use serde::{Deserialize, Serialize};

use crate::model::{BoundParams, ModelError, ParamSet, Tape};

/// Training hyperparameters. `epochs`, `cycle_len_epochs` and
/// `warmup_epochs` are profile-driven; the optimizer defaults follow the
/// usual Adam constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub cycle_len_epochs: usize,
    pub cycle_mult: f64,
    pub warmup_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            lr_max: 0.0003,
            lr_min: 1e-6,
            cycle_len_epochs: 30,
            cycle_mult: 1.0,
            warmup_epochs: 3,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr_min >= 0.0 && self.lr_min < self.lr_max) {
            return Err(ModelError::Config(format!(
                "need 0 <= lr_min < lr_max, got {} / {}",
                self.lr_min, self.lr_max
            )));
        }
        if self.cycle_len_epochs == 0 {
            return Err(ModelError::Config("cycle_len_epochs must be >= 1".into()));
        }
        if self.cycle_mult < 1.0 {
            return Err(ModelError::Config(format!(
                "cycle_mult must be >= 1, got {}",
                self.cycle_mult
            )));
        }
        Ok(())
    }
}

/// Gradient accumulator aligned with a [`ParamSet`]'s entry order.
pub struct GradBuffer {
    grads: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn zeros(params: &ParamSet) -> Self {
        GradBuffer {
            grads: params.tensors().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for g in self.grads.iter_mut() {
            for v in g.iter_mut() {
                *v = 0.0;
            }
        }
    }

    /// Adds the tape gradients of every bound parameter.
    pub fn accumulate(&mut self, tape: &Tape, bound: &BoundParams) {
        for (buf, &r) in self.grads.iter_mut().zip(bound.refs()) {
            for (b, &g) in buf.iter_mut().zip(tape.grad(r)) {
                *b += g;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in self.grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= c;
            }
        }
    }

    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.grads
    }
}

/// Adam moment estimates, one pair per parameter tensor.
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            m: params.tensors().map(|t| vec![0.0; t.len()]).collect(),
            v: params.tensors().map(|t| vec![0.0; t.len()]).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update in place.
    // four parallel buffers are indexed in lockstep
    #[allow(clippy::needless_range_loop)]
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &GradBuffer,
        lr: f64,
    ) -> Result<(), ModelError> {
        if grads.grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(ModelError::Contract(format!(
                "adam: {} parameter tensors, {} gradient tensors, {} moment tensors",
                params.len(),
                grads.grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..self.m.len() {
            let tensor = params.tensor_at_mut(i);
            let g = &grads.grads[i];
            if tensor.values.len() != g.len() {
                return Err(ModelError::Contract(format!(
                    "adam: tensor {i} has {} values but {} gradients",
                    tensor.values.len(),
                    g.len()
                )));
            }
            for j in 0..g.len() {
                let m = &mut self.m[i][j];
                let v = &mut self.v[i][j];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g[j];
                *v = self.beta2 * *v + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                tensor.values[j] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Cosine schedule with warm restarts and a linear warm-up at the start of
/// each cycle. Cycle lengths grow by `cycle_mult` after every restart.
pub fn lr_schedule(epoch: f64, cfg: &TrainConfig) -> f64 {
    debug_assert!(epoch >= 0.0);
    let mut e = epoch.max(0.0);
    let mut cycle_len = cfg.cycle_len_epochs as f64;
    while e >= cycle_len {
        e -= cycle_len;
        cycle_len *= cfg.cycle_mult.max(1.0);
    }
    let warm = (cfg.warmup_epochs as f64).min(cycle_len);
    if e < warm {
        return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * e / warm;
    }
    let remainder = cycle_len - warm;
    if remainder <= 0.0 {
        return cfg.lr_max;
    }
    let tau = (e - warm) / remainder;
    // exact endpoints: lr_max at the warm-up end, lr_min at the cycle end
    if tau <= 0.0 {
        return cfg.lr_max;
    }
    if tau >= 1.0 {
        return cfg.lr_min;
    }
    cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + (std::f64::consts::PI * tau).cos())
}
