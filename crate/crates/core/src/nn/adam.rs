use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{Gradients, NetworkParams};

/// Adam hyperparameters. The defaults are the usual framework defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// First and second moment estimates for each parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub(crate) step: u64,
    pub(crate) first: Vec<Tensor>,
    pub(crate) second: Vec<Tensor>,
}

impl AdamState {
    pub fn for_tensors(params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// Non-finite gradients are rejected before anything is modified.
    pub fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor], config: &AdamConfig) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return Err(Error::config("Adam state, parameters and gradients disagree in length"));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::config(format!(
                    "gradient shape {:?} does not match parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::Training("non-finite gradient".into()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - config.beta1.powi(t);
        let correction2 = 1.0 - config.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = config.beta1 * *mv + (1.0 - config.beta1) * gv;
                *vv = config.beta2 * *vv + (1.0 - config.beta2) * gv * gv;
                let m_hat = *mv / correction1;
                let v_hat = *vv / correction2;
                *pv -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to a network using its own optimizer state.
pub fn adam_step(params: &mut NetworkParams, grads: &Gradients, config: &AdamConfig) -> Result<()> {
    let NetworkParams { tensors, adam, .. } = params;
    adam.apply(tensors, grads.tensors(), config)
}
