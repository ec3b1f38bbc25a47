use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global-norm gradient clipping; off unless set.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, clip_norm: None }
    }
}

/// Bias-corrected Adam moments for an ordered list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step_count: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, config: AdamConfig) -> Self {
        let first_moment: Vec<Tensor> =
            params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        let second_moment = first_moment.clone();
        AdamState { config, first_moment, second_moment, step_count: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if !(lr >= 0.0) {
            return Err(Error::contract(format!("learning rate must be >= 0, got {lr}")));
        }
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::dim(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first_moment) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::dim(format!(
                    "adam: param {:?}, grad {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
        }

        let clip = match self.config.clip_norm {
            Some(max) => {
                let norm = grads
                    .iter()
                    .flat_map(|g| g.data())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > max { max / norm } else { 1.0 }
            }
            None => 1.0,
        };

        self.step_count += 1;
        let AdamConfig { beta1, beta2, epsilon, .. } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            let iter = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut());
            for (((w, &gi), mi), vi) in iter {
                let gi = gi * clip;
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
