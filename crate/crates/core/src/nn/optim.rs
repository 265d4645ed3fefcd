use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Linear warm-up from `base_lr * initial_factor` at step 0 to `base_lr` at
/// `warmup_steps`, constant afterwards.
pub fn warmup_lr(step: usize, base_lr: f64, warmup_steps: usize, initial_factor: f64) -> f64 {
    if warmup_steps == 0 || step >= warmup_steps {
        return base_lr;
    }
    let t = step as f64 / warmup_steps as f64;
    base_lr * (initial_factor + (1.0 - initial_factor) * t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW with decoupled weight decay and bias correction.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients held in `store`, then clears them.
    ///
    /// Any non-finite gradient aborts the step before a single parameter is
    /// touched. Frozen parameters and parameters without a gradient are not
    /// updated or decayed.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if let Some(p) = store
            .iter()
            .find(|p| p.grad.as_ref().is_some_and(|g| !g.all_finite()))
        {
            return Err(Error::NonFiniteGradient(p.name.clone()));
        }
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, p) in store.iter_mut().enumerate() {
            let Some(g) = p.grad.take() else { continue };
            if !p.trainable {
                continue;
            }
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((theta, gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *theta -= lr * weight_decay * *theta;
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
