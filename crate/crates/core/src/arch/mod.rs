//! The five network architectures, their parameter tables and forward passes.

mod forward;
mod plan;
mod spec;

use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::autograd::{BatchNormStats, Graph, Var};
use crate::error::{bail, Result};
use crate::rng;
use crate::scalar::Real;
use crate::tensor::Tensor;

pub use forward::{Forward, Mode};
pub use plan::{plan, Init, ParamInfo, Plan, EMBED_STD};
pub use spec::{
    Arch, ArchKind, CctSpec, CrossVitSpec, DenseNetSpec, DenseStem, LenetSpec, ModelSpec, Preset, VitSpec, DESK_SIDE,
    PAPER_SIDE,
};

/// Trainable parameter count of `spec` without building the model.
pub fn count_plan_params(spec: &ModelSpec) -> Result<usize> {
    Ok(plan(spec)?.count_params())
}

/// Draws the initial value of parameter `index` of a plan.
pub fn init_tensor<T: Real>(info: &ParamInfo, seed: u64, index: usize) -> Tensor<T> {
    let n = info.numel();
    let mut r = rng::stream(seed, &[0x696e_6974, index as u64]);
    let data: Vec<T> = match info.init {
        Init::XavierUniform { fan_in, fan_out } => {
            let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            (0..n).map(|_| T::from_f64(r.random_range(-a..a))).collect()
        }
        Init::KaimingNormal { fan_in } => gaussian(&mut r, n, libm::sqrt(2.0 / fan_in as f64)),
        Init::Normal { std } => gaussian(&mut r, n, std),
        Init::Zeros => alloc::vec![T::zero(); n],
        Init::Ones => alloc::vec![T::one(); n],
        Init::Identity => {
            let d = info.shape[0];
            (0..n).map(|i| if i / d == i % d { T::one() } else { T::zero() }).collect()
        }
    };
    Tensor::new(info.shape.clone(), data).expect("planned shape")
}

fn gaussian<T: Real>(r: &mut rng::Rng, n: usize, std: f64) -> Vec<T> {
    let d = Normal::new(0.0, std).expect("positive std");
    (0..n).map(|_| T::from_f64(d.sample(r))).collect()
}

/// An instantiated architecture: ordered named parameters plus batchnorm
/// running statistics.
#[derive(Clone, Debug)]
pub struct Model<T> {
    spec: ModelSpec,
    plan: Plan,
    params: Vec<Tensor<T>>,
    buffers: Vec<BatchNormStats<T>>,
}

impl<T: Real> Model<T> {
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let plan = plan(spec)?;
        let params = plan.params.iter().enumerate().map(|(i, p)| init_tensor(p, seed, i)).collect();
        let buffers = plan.batchnorms.iter().map(|&c| BatchNormStats::new(c)).collect();
        Ok(Self { spec: spec.clone(), plan, params, buffers })
    }

    /// Assembles a model from externally supplied tensors, e.g. a checkpoint
    /// or imported weights; every shape must match the plan.
    pub fn from_parts(spec: &ModelSpec, params: Vec<Tensor<T>>, buffers: Vec<BatchNormStats<T>>) -> Result<Self> {
        let plan = plan(spec)?;
        if params.len() != plan.params.len() {
            bail!(Dimension, "{} parameter tensors for a plan of {}", params.len(), plan.params.len());
        }
        for (t, info) in params.iter().zip(&plan.params) {
            if t.shape() != info.shape.as_slice() {
                bail!(Dimension, "parameter {} has shape {:?}, expected {:?}", info.name, t.shape(), info.shape);
            }
        }
        if buffers.len() != plan.batchnorms.len()
            || buffers.iter().zip(&plan.batchnorms).any(|(b, &c)| b.mean.len() != c || b.var.len() != c)
        {
            bail!(Dimension, "batchnorm statistics do not match the plan's {} layers", plan.batchnorms.len());
        }
        Ok(Self { spec: spec.clone(), plan, params, buffers })
    }

    /// Redraws every parameter from `seed` and resets running statistics.
    pub fn init(&mut self, seed: u64) {
        for (i, (p, info)) in self.params.iter_mut().zip(&self.plan.params).enumerate() {
            *p = init_tensor(info, seed, i);
        }
        for (b, &c) in self.buffers.iter_mut().zip(&self.plan.batchnorms) {
            *b = BatchNormStats::new(c);
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn param_info(&self) -> &[ParamInfo] {
        &self.plan.params
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[BatchNormStats<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [BatchNormStats<T>] {
        &mut self.buffers
    }

    pub fn count_params(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn has_batchnorm(&self) -> bool {
        !self.buffers.is_empty()
    }

    /// Registers the parameters on `g`, tracked for gradients when
    /// `trainable`.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.params.iter().map(|p| g.leaf(p.clone(), trainable)).collect()
    }

    /// Logits `B × 2` of `input` (`B × C × side × side`), with `vars` from
    /// [`Model::bind`].
    pub fn forward(&self, g: &mut Graph<T>, vars: &[Var], input: Var, mode: Mode) -> Result<Forward<T>> {
        if vars.len() != self.params.len() {
            bail!(Contract, "{} bound variables for {} parameters", vars.len(), self.params.len());
        }
        let s = g.shape(input);
        let want = [self.spec.in_channels, self.spec.image_side, self.spec.image_side];
        if s.len() != 4 || s[0] == 0 || s[1..] != want {
            bail!(Dimension, "input {:?} does not match B×{}×{}×{}", s, want[0], want[1], want[2]);
        }
        forward::run(&self.plan.net, g, vars, &self.buffers, input, mode)
    }

    /// Eval-mode logits of a batch, without gradient tracking.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(input.clone());
        let out = self.forward(&mut g, &vars, x, Mode::Eval)?;
        Ok(g.value(out.logits).clone())
    }

    pub fn apply_bn_updates(&mut self, updates: Vec<(usize, BatchNormStats<T>)>) {
        for (i, s) in updates {
            self.buffers[i] = s;
        }
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let cast_stats = |b: &BatchNormStats<T>| BatchNormStats {
            mean: b.mean.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            var: b.var.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        };
        Model {
            spec: self.spec.clone(),
            plan: self.plan.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            buffers: self.buffers.iter().map(cast_stats).collect(),
        }
    }
}

#[cfg(test)]
mod tests;
