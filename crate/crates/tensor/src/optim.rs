use crate::error::{Result, TensorError};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments. Moment buffers follow the parameter
/// order of the store they were created for.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f32>> = store.iter().map(|(_, p)| vec![0.0; p.value.numel()]).collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Restores optimizer state, e.g. from a checkpoint.
    pub fn from_parts(config: AdamConfig, step: u64, m: Vec<Vec<f32>>, v: Vec<Vec<f32>>) -> Self {
        Self { config, step, m, v }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f32>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f32>] {
        &self.v
    }

    /// Applies one update in place and clears every gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if let Some((name, _)) = store.iter().find(|(_, p)| p.grad.is_none()) {
            return Err(TensorError::MissingGrad(name.to_string()));
        }
        if store.len() != self.m.len() {
            return Err(TensorError::Dimension {
                op: "adam",
                msg: format!("optimizer tracks {} tensors, store has {}", self.m.len(), store.len()),
            });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - (beta1 as f64).powi(self.step as i32);
        let bc2 = 1.0 - (beta2 as f64).powi(self.step as i32);
        let (bc1, bc2) = (bc1 as f32, bc2 as f32);
        for (((_, p), m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.take().expect("checked above");
            let w = p.value.data_mut();
            for i in 0..w.len() {
                let gi = g.data()[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
