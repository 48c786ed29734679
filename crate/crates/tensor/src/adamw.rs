use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Linear learning-rate schedule between two endpoints over a fixed horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub lr_start: f64,
    pub lr_end: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            lr_start: lr,
            lr_end: lr,
            total_steps: 1,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        if self.total_steps <= 1 {
            return self.lr_start;
        }
        let frac = (step.min(self.total_steps) as f64) / (self.total_steps as f64 - 1.0).max(1.0);
        self.lr_start + (self.lr_end - self.lr_start) * frac.min(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct AdamWConfig {
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            schedule: LrSchedule::constant(1e-3),
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// AdamW state: first/second moment buffers per parameter plus the step count.
#[derive(Debug, Clone)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig, param_sizes: &[usize]) -> Self {
        AdamWState {
            config,
            step: 0,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn moment_buffers(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Restores moment buffers (checkpoint resume).
    pub fn restore(&mut self, step: usize, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(TensorError::InvalidShape {
                op: "adamw_restore",
                shape: vec![m.len(), v.len()],
                reason: format!("expected {} parameter buffers", self.m.len()),
            });
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// One decoupled-weight-decay Adam step over all parameters.
    ///
    /// `grads[i]` must shape-match `params[i]`. Halts on non-finite gradients.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(TensorError::InvalidShape {
                op: "adamw_step",
                shape: vec![params.len(), grads.len()],
                reason: format!("state tracks {} parameters", self.m.len()),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.numel() != g.len() {
                return Err(TensorError::DataLength {
                    len: g.len(),
                    shape: p.shape().to_vec(),
                });
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TensorError::NonFinite("adamw gradient"));
            }
        }
        let lr = self.config.schedule.at(self.step);
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let data = p.data_mut();
            for i in 0..data.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= lr * (m_hat / (v_hat.sqrt() + self.config.eps)
                    + self.config.weight_decay * data[i]);
            }
        }
        Ok(())
    }
}
