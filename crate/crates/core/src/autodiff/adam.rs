use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, ShapeError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, p)| vec![0.0; p.tensor.len()]).collect();
        Adam { config, first: zeros(), second: zeros(), steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<(), ShapeError> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(ShapeError::Invalid {
                op: "adam_step",
                reason: format!("{} gradients for {} parameters", grads.len(), params.len()),
            });
        }
        for (id, p) in params.iter() {
            let (n, g) = (p.tensor.len(), grads.get(id).len());
            if n != g || self.first[id.0].len() != n {
                return Err(ShapeError::Invalid {
                    op: "adam_step",
                    reason: format!("parameter {} has {n} values but {g} gradients", p.name),
                });
            }
        }

        self.steps += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (id, p) in params.iter_mut() {
            let g = grads.get(id);
            let m = &mut self.first[id.0];
            let v = &mut self.second[id.0];
            for (i, w) in p.tensor.data.iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
