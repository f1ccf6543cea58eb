//! AdamW: Adam with decoupled (multiplicative) weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParamStore;

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 4e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// AdamW state over a [`ParamStore`]. Moment buffers are indexed in store
/// registration order, matching the gradient vectors passed to [`AdamW::step`].
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub(crate) step_count: u64,
    pub(crate) m: Vec<Vec<f64>>,
    pub(crate) v: Vec<Vec<f64>>,
}

impl AdamW {
    /// Fresh optimizer with zeroed moments for every parameter in `store`.
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Self {
        let m = store.entries.iter().map(|p| vec![0.0; p.data.len()]).collect();
        let v = store.entries.iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self {
            config,
            step_count: 0,
            m,
            v,
        }
    }

    /// Steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. `grads` must hold one gradient vector per
    /// parameter in store order. If any gradient value is non-finite the
    /// step is rejected: neither parameters nor moments are touched and an
    /// error is returned so the caller can skip the batch.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::invalid(
                "adamw",
                format!("{} gradients for {} parameters", grads.len(), store.len()),
            ));
        }
        for (p, g) in store.entries.iter().zip(grads) {
            if g.len() != p.data.len() {
                return Err(Error::invalid(
                    "adamw",
                    format!("gradient for {} has {} values, expected {}", p.name, g.len(), p.data.len()),
                ));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient of {}", p.name),
                });
            }
        }
        let t = self.step_count + 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t as i32);
        let bc2 = 1.0 - c.beta2.powi(t as i32);
        let decay = 1.0 - c.learning_rate * c.weight_decay;
        for ((p, g), (m, v)) in store
            .entries
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] = p.data[i] * decay - c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        self.step_count = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", &[1], vec![value]).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // p = 1, g = 1, lr = 0.1, wd = 0: bias correction makes the first
        // update exactly lr * g / (|g| + eps), so p ~ 0.9.
        let mut store = single_param(1.0);
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &store);
        opt.step(&mut store, &[vec![1.0]]).unwrap();
        let p = store.data(crate::tensor::ParamId(0))[0];
        assert!((p - 0.9).abs() < 1e-7, "p = {}", p);
    }

    #[test]
    fn weight_decay_is_decoupled_and_multiplicative() {
        // Zero gradient, wd = 0.1, lr = 0.1: p scales by (1 - lr * wd).
        let mut store = single_param(1.0);
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &store);
        opt.step(&mut store, &[vec![0.0]]).unwrap();
        let p = store.data(crate::tensor::ParamId(0))[0];
        assert!((p - (1.0 - 0.01)).abs() < 1e-12, "p = {}", p);
    }

    #[test]
    fn non_finite_gradient_rejects_step_without_side_effects() {
        let mut store = single_param(1.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        let err = opt.step(&mut store, &[vec![f64::NAN]]).unwrap_err();
        assert!(err.to_string().contains("non-finite"));
        assert_eq!(store.data(crate::tensor::ParamId(0))[0], 1.0);
        assert_eq!(opt.step_count(), 0);
        assert_eq!(opt.m[0][0], 0.0);
    }

    #[test]
    fn two_steps_apply_bias_correction() {
        // Constant gradient 1: m_hat = v_hat = 1 at every step, so each
        // update subtracts lr / (1 + eps) regardless of step count.
        let mut store = single_param(1.0);
        let cfg = AdamWConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &store);
        opt.step(&mut store, &[vec![1.0]]).unwrap();
        opt.step(&mut store, &[vec![1.0]]).unwrap();
        let p = store.data(crate::tensor::ParamId(0))[0];
        assert!((p - 0.8).abs() < 1e-6, "p = {}", p);
    }
}
