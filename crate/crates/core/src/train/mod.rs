//! Training recipe: schedules, Adam, initialization and per-batch gradients.
//!
//! The epoch loop, threading and checkpoint files live in the `cxr` crate;
//! everything here is deterministic arithmetic.

mod adam;

use alloc::vec::Vec;

use crate::arch::{ArchKind, Mode, Model};
use crate::autograd::{BatchNormStats, Graph};
use crate::error::{bail, Result};
use crate::metrics::Metrics;
use crate::scalar::Real;
use crate::tensor::Tensor;

pub use adam::{Adam, AdamConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Schedule {
    /// Linear rise from 0 over the warmup steps, then linear decay to 0.
    WarmupLinear,
    /// `base_lr · ½(1 + cos(π·step/total))`.
    Cosine,
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub schedule: Schedule,
    pub warmup_fraction: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    pub workers: usize,
    /// Weight the loss by `N / (2·N_c)` of the training labels.
    pub balanced_loss: bool,
    /// Shuffle the training split every epoch.
    pub shuffle: bool,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            base_lr: 1e-4,
            schedule: Schedule::WarmupLinear,
            warmup_fraction: 0.1,
            adam: AdamConfig::default(),
            seed: 0,
            workers: 1,
            balanced_loss: true,
            shuffle: true,
            augment: true,
        }
    }
}

impl TrainConfig {
    /// Epoch count and schedule used for `kind` in the reference runs.
    pub fn for_kind(kind: ArchKind) -> Self {
        let (epochs, schedule) = match kind {
            ArchKind::DeepVit | ArchKind::Cct | ArchKind::CrossVit => (20, Schedule::WarmupLinear),
            ArchKind::Densenet => (50, Schedule::Cosine),
            ArchKind::LenetMod => (50, Schedule::Constant),
        };
        Self { epochs, schedule, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            bail!(Config, "batch_size must be positive");
        }
        if self.workers == 0 {
            bail!(Config, "workers must be positive");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            bail!(Config, "base_lr must be positive, got {}", self.base_lr);
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            bail!(Config, "warmup_fraction {} must lie in [0, 1)", self.warmup_fraction);
        }
        self.adam.validate()
    }

    pub fn steps_per_epoch(&self, samples: usize) -> usize {
        samples.div_ceil(self.batch_size)
    }
}

/// Learning rate at `step` of a run of `total` steps.
pub fn lr_at(step: usize, total: usize, cfg: &TrainConfig) -> Result<f64> {
    if step >= total {
        bail!(Contract, "step {} outside a schedule of {} steps", step, total);
    }
    let (s, n, base) = (step as f64, total as f64, cfg.base_lr);
    Ok(match cfg.schedule {
        Schedule::Constant => base,
        Schedule::Cosine => base * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * s / n)),
        Schedule::WarmupLinear => {
            let warm = cfg.warmup_fraction * n;
            if s < warm {
                base * s / warm
            } else if total == 1 {
                base
            } else {
                // Decay hits zero at the last step.
                base * (n - 1.0 - s) / (n - 1.0 - warm).max(f64::MIN_POSITIVE)
            }
        }
    })
}

/// Redraws all parameters of `model` from `seed` with the per-layer laws.
pub fn init_params<T: Real>(model: &mut Model<T>, seed: u64) {
    model.init(seed);
}

/// `N / (2·N_c)` per class of `labels`; a missing class gets weight 0.
pub fn balanced_loss_weights(labels: &[usize]) -> [f64; 2] {
    let mut c = [0usize; 2];
    for &l in labels {
        if l < 2 {
            c[l] += 1;
        }
    }
    let n = (c[0] + c[1]) as f64;
    c.map(|k| if k == 0 { 0.0 } else { n / (2.0 * k as f64) })
}

/// Loss and parameter gradients of one batch (or shard of a batch).
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub loss: f64,
    pub grads: Vec<Vec<T>>,
    pub bn_updates: Vec<(usize, BatchNormStats<T>)>,
    pub samples: usize,
}

/// Forward, weighted cross-entropy and backward on `x` (`B × C × H × W`).
pub fn batch_gradients<T: Real>(
    model: &Model<T>,
    x: &Tensor<T>,
    labels: &[usize],
    class_weights: Option<&[f64]>,
    mode: Mode,
) -> Result<Gradients<T>> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, true);
    let xv = g.constant(x.clone());
    let out = model.forward(&mut g, &vars, xv, mode)?;
    let loss = g.softmax_cross_entropy(out.logits, labels, class_weights)?;
    let lv = g.value(loss).item().as_f64();
    if !lv.is_finite() {
        bail!(Divergence, "non-finite loss {}", lv);
    }
    g.backward(loss)?;
    let grads = vars
        .iter()
        .zip(model.params())
        .map(|(&v, p)| g.take_grad(v).unwrap_or_else(|| alloc::vec![T::zero(); p.numel()]))
        .collect();
    Ok(Gradients { loss: lv, grads, bn_updates: out.bn_updates, samples: labels.len() })
}

/// Combines shard results into the full-batch result: losses and gradients
/// are averaged with weights `n_s / N`.
///
/// Exact for losses that average over samples. Batchnorm statistics are
/// per shard, so models with batchnorm see shard-local normalization and
/// keep the first shard's running-statistic update.
pub fn combine_shards<T: Real>(shards: Vec<Gradients<T>>) -> Result<Gradients<T>> {
    let total: usize = shards.iter().map(|s| s.samples).sum();
    if total == 0 {
        bail!(Contract, "no samples across {} shards", shards.len());
    }
    let mut it = shards.into_iter();
    let first = it.next().expect("total > 0 implies a shard");
    if it.len() == 0 {
        return Ok(first);
    }
    let wf = first.samples as f64 / total as f64;
    let mut loss = first.loss * wf;
    let mut acc: Vec<Vec<f64>> = first.grads.iter().map(|g| g.iter().map(|v| v.as_f64() * wf).collect()).collect();
    let bn_updates = first.bn_updates;
    for s in it {
        let w = s.samples as f64 / total as f64;
        loss += s.loss * w;
        for (a, g) in acc.iter_mut().zip(&s.grads) {
            for (x, v) in a.iter_mut().zip(g) {
                *x += v.as_f64() * w;
            }
        }
    }
    let grads = acc.into_iter().map(|a| a.into_iter().map(T::from_f64).collect()).collect();
    Ok(Gradients { loss, grads, bn_updates, samples: total })
}

/// Splits `n` samples into at most `workers` contiguous near-equal shards.
pub fn shard_ranges(n: usize, workers: usize) -> Vec<core::ops::Range<usize>> {
    let w = workers.clamp(1, n.max(1));
    let (q, r) = (n / w, n % w);
    let mut start = 0;
    (0..w)
        .map(|i| {
            let len = q + usize::from(i < r);
            let range = start..start + len;
            start += len;
            range
        })
        .filter(|r| !r.is_empty())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval: Option<Metrics>,
    pub seconds: f64,
}

/// One entry per completed epoch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }

    pub fn total_seconds(&self) -> f64 {
        self.epochs.iter().map(|e| e.seconds).sum()
    }
}
