use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            bail!(Config, "Adam betas ({}, {}) must lie in [0, 1)", self.beta1, self.beta2);
        }
        if !(self.eps > 0.0) {
            bail!(Config, "Adam eps must be positive, got {}", self.eps);
        }
        Ok(())
    }
}

/// Bias-corrected Adam moments, kept in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    /// Zero moments for parameters of the given element counts.
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { step: 0, m, v }
    }

    pub fn for_params<T: Real>(params: &[Tensor<T>]) -> Self {
        Self::new(params.iter().map(Tensor::numel))
    }

    /// Applies one update in place. Parameters are untouched when any
    /// gradient is non-finite.
    pub fn update<T: Real>(&mut self, params: &mut [Tensor<T>], grads: &[Vec<T>], lr: f64, cfg: &AdamConfig) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            bail!(Contract, "{} parameters, {} gradients, {} moment slots", params.len(), grads.len(), self.m.len());
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != g.len() || self.m[i].len() != g.len() {
                bail!(Dimension, "gradient {} has {} elements for a parameter of {}", i, g.len(), p.numel());
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                bail!(Divergence, "non-finite gradient at parameter {} element {}", i, j);
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(cfg.beta1, t);
        let c2 = 1.0 - libm::pow(cfg.beta2, t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, x) in p.data_mut().iter_mut().enumerate() {
                let gk = g[k].as_f64();
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                *x = T::from_f64(x.as_f64() - lr * mh / (libm::sqrt(vh) + cfg.eps));
            }
        }
        Ok(())
    }
}
