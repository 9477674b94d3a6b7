use serde::{Deserialize, Serialize};

use super::param::{ParamStore, Parameter};
use crate::error::{Result, TaasError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 3e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TaasError::config("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(TaasError::config("beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(TaasError::config("beta2", "must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(TaasError::config("epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update. The gradient is zeroed afterwards.
pub fn adam_step(p: &mut Parameter, cfg: &AdamConfig) {
    p.step_count += 1;
    let t = p.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let value = p.value.data_mut();
    let grad = p.gradient.data_mut();
    let m = p.adam_m.data_mut();
    let v = p.adam_v.data_mut();
    for i in 0..value.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        value[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        grad[i] = 0.0;
    }
}

impl ParamStore {
    /// Applies [`adam_step`] to every unfrozen parameter and clears all
    /// gradients, frozen ones included.
    pub fn adam_step_all(&mut self, cfg: &AdamConfig) {
        for p in self.iter_mut() {
            if p.frozen {
                p.zero_grad();
            } else {
                adam_step(p, cfg);
            }
        }
    }
}
