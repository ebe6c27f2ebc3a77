use serde::{Deserialize, Serialize};

use super::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(parameter_count: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; parameter_count],
            second_moment: vec![0.0; parameter_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update for a minimisation problem.
    ///
    /// Non-finite gradients leave both the parameters and the state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), AutodiffError> {
        if params.len() != self.first_moment.len() {
            return Err(AutodiffError::ParameterCount {
                expected: self.first_moment.len(),
                found: params.len(),
            });
        }
        if grads.len() != params.len() {
            return Err(AutodiffError::ParameterCount {
                expected: params.len(),
                found: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(AutodiffError::NonFiniteGradient);
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let correction1 = 1.0 - beta1.powi(self.step as i32);
        let correction2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
