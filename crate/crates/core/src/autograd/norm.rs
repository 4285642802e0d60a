use alloc::vec;
use alloc::vec::Vec;

use super::{Graph, Op, Var};
use crate::error::{bail, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const LN_EPS: f64 = 1e-5;

/// Per-channel running statistics of a batchnorm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> BatchNormStats<T> {
    pub fn new(channels: usize) -> Self {
        Self { mean: vec![T::zero(); channels], var: vec![T::one(); channels] }
    }
}

impl<T: Real> Graph<T> {
    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let Some(&k) = shape.last() else {
            bail!(Dimension, "softmax of a scalar");
        };
        let x = self.value(a).data();
        let mut out = Vec::with_capacity(x.len());
        for row in x.chunks(k) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
            let e: Vec<f64> = row.iter().map(|v| libm::exp(v.as_f64() - max)).collect();
            let z: f64 = e.iter().sum();
            out.extend(e.into_iter().map(|v| T::from_f64(v / z)));
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::Softmax(a), &[a]))
    }

    /// Mean over the batch of `-w[y] * log softmax(logits)[y]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize], class_weights: Option<&[f64]>) -> Result<Var> {
        let shape = self.shape(logits);
        if shape.len() != 2 {
            bail!(Dimension, "cross entropy expects B×K logits, got {:?}", shape);
        }
        let (b, k) = (shape[0], shape[1]);
        if targets.len() != b {
            bail!(Dimension, "{} targets for {} rows of logits", targets.len(), b);
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            bail!(Label, "target {} outside [0, {})", t, k);
        }
        if let Some(w) = class_weights {
            if w.len() != k {
                bail!(Dimension, "{} class weights for {} classes", w.len(), k);
            }
        }
        let x = self.value(logits).data();
        let mut probs = Vec::with_capacity(b * k);
        let mut total = 0.0;
        for (row, &t) in x.chunks(k).zip(targets) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
            let z: f64 = row.iter().map(|v| libm::exp(v.as_f64() - max)).sum();
            let log_z = max + libm::log(z);
            let w = class_weights.map_or(1.0, |w| w[t]);
            total += w * (log_z - row[t].as_f64());
            probs.extend(row.iter().map(|v| libm::exp(v.as_f64() - log_z)));
        }
        let loss = Tensor::scalar(T::from_f64(total / b as f64));
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            weights: class_weights.map(|w| w.to_vec()),
            probs,
        };
        Ok(self.push(loss, op, &[logits]))
    }

    /// Batch normalization over all axes except axis 1.
    ///
    /// In training mode the batch statistics are used and the updated
    /// running statistics are returned; in eval mode `stats` is used as is.
    pub fn batchnorm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        stats: &BatchNormStats<T>,
        train: bool,
    ) -> Result<(Var, Option<BatchNormStats<T>>)> {
        let shape = self.shape(input).to_vec();
        if shape.len() < 2 {
            bail!(Dimension, "batchnorm expects B×C×..., got {:?}", shape);
        }
        let (b, c) = (shape[0], shape[1]);
        let spatial: usize = shape[2..].iter().product();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || stats.mean.len() != c {
            bail!(Dimension, "batchnorm parameters do not match {} channels", c);
        }
        if train && b < 2 {
            bail!(DegenerateBatch, "batch of {} in training mode; batch statistics need at least 2 samples", b);
        }
        let x = self.value(input).data();
        let gm = self.value(gamma).data();
        let bt = self.value(beta).data();
        let n = b * spatial;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        if train {
            for bi in 0..b {
                for ci in 0..c {
                    let p = &x[(bi * c + ci) * spatial..][..spatial];
                    mean[ci] += p.iter().map(|v| v.as_f64()).sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            for bi in 0..b {
                for ci in 0..c {
                    let p = &x[(bi * c + ci) * spatial..][..spatial];
                    var[ci] += p.iter().map(|v| { let d = v.as_f64() - mean[ci]; d * d }).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
        } else {
            mean = stats.mean.iter().map(|v| v.as_f64()).collect();
            var = stats.var.iter().map(|v| v.as_f64()).collect();
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + BN_EPS)).collect();
        let mut xhat = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        for bi in 0..b {
            for ci in 0..c {
                let p = &x[(bi * c + ci) * spatial..][..spatial];
                let (g, bb) = (gm[ci].as_f64(), bt[ci].as_f64());
                for v in p {
                    let xh = (v.as_f64() - mean[ci]) * inv_std[ci];
                    xhat.push(T::from_f64(xh));
                    out.push(T::from_f64(g * xh + bb));
                }
            }
        }
        let updated = train.then(|| {
            let unbias = n as f64 / (n as f64 - 1.0);
            BatchNormStats {
                mean: stats
                    .mean
                    .iter()
                    .zip(&mean)
                    .map(|(r, m)| T::from_f64((1.0 - BN_MOMENTUM) * r.as_f64() + BN_MOMENTUM * m))
                    .collect(),
                var: stats
                    .var
                    .iter()
                    .zip(&var)
                    .map(|(r, v)| T::from_f64((1.0 - BN_MOMENTUM) * r.as_f64() + BN_MOMENTUM * v * unbias))
                    .collect(),
            }
        });
        let out = Tensor::new(shape, out)?;
        let op = Op::BatchNorm { input, gamma, beta, xhat, inv_std, train };
        Ok((self.push(out, op, &[input, gamma, beta]), updated))
    }

    /// Layer normalization over the last axis.
    pub fn layernorm(&mut self, input: Var, gamma: Var, beta: Var) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        let Some(&d) = shape.last() else {
            bail!(Dimension, "layernorm of a scalar");
        };
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            bail!(Dimension, "layernorm parameters {:?}/{:?} for width {}", self.shape(gamma), self.shape(beta), d);
        }
        let x = self.value(input).data();
        let gm = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(x.len() / d);
        let mut out = Vec::with_capacity(x.len());
        for row in x.chunks(d) {
            let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| { let d = v.as_f64() - mean; d * d }).sum::<f64>() / d as f64;
            let is = 1.0 / libm::sqrt(var + LN_EPS);
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                let xh = (v.as_f64() - mean) * is;
                xhat.push(T::from_f64(xh));
                out.push(T::from_f64(gm[j].as_f64() * xh + bt[j].as_f64()));
            }
        }
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::LayerNorm { input, gamma, beta, xhat, inv_std }, &[input, gamma, beta]))
    }

    pub(super) fn bw_softmax(&self, out: usize, a: Var, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let y = self.value(Var(out));
        let k = *y.shape().last().expect("softmax rank >= 1");
        if let Some(s) = self.slot(grads, a) {
            for ((yr, gr), sr) in y.data().chunks(k).zip(g.chunks(k)).zip(s.chunks_mut(k)) {
                let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y.as_f64() * g.as_f64()).sum();
                for j in 0..k {
                    sr[j] += T::from_f64(yr[j].as_f64() * (gr[j].as_f64() - dot));
                }
            }
        }
    }

    pub(super) fn bw_cross_entropy(
        &self,
        logits: Var,
        targets: &[usize],
        weights: Option<&[f64]>,
        probs: &[f64],
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let b = targets.len();
        let k = probs.len() / b;
        let scale = g[0].as_f64() / b as f64;
        if let Some(s) = self.slot(grads, logits) {
            for (i, &t) in targets.iter().enumerate() {
                let w = weights.map_or(1.0, |w| w[t]) * scale;
                for j in 0..k {
                    let onehot = if j == t { 1.0 } else { 0.0 };
                    s[i * k + j] += T::from_f64(w * (probs[i * k + j] - onehot));
                }
            }
        }
    }

    pub(super) fn bw_batchnorm(
        &self,
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: &[T],
        inv_std: &[f64],
        train: bool,
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let shape = self.shape(input);
        let (b, c) = (shape[0], shape[1]);
        let spatial: usize = shape[2..].iter().product();
        let n = (b * spatial) as f64;
        let gm = self.value(gamma).data();
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * spatial;
                for j in off..off + spatial {
                    let gv = g[j].as_f64();
                    sum_g[ci] += gv;
                    sum_gx[ci] += gv * xhat[j].as_f64();
                }
            }
        }
        if let Some(s) = self.slot(grads, gamma) {
            s.iter_mut().zip(&sum_gx).for_each(|(s, v)| *s += T::from_f64(*v));
        }
        if let Some(s) = self.slot(grads, beta) {
            s.iter_mut().zip(&sum_g).for_each(|(s, v)| *s += T::from_f64(*v));
        }
        if let Some(s) = self.slot(grads, input) {
            for bi in 0..b {
                for ci in 0..c {
                    let off = (bi * c + ci) * spatial;
                    let k = gm[ci].as_f64() * inv_std[ci];
                    for j in off..off + spatial {
                        let gv = g[j].as_f64();
                        let d = if train {
                            k * (gv - sum_g[ci] / n - xhat[j].as_f64() * sum_gx[ci] / n)
                        } else {
                            k * gv
                        };
                        s[j] += T::from_f64(d);
                    }
                }
            }
        }
    }

    pub(super) fn bw_layernorm(
        &self,
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: &[T],
        inv_std: &[f64],
        g: &[T],
        grads: &mut [Option<Vec<T>>],
    ) {
        let d = *self.shape(input).last().expect("rank >= 1");
        let gm = self.value(gamma).data();
        if self.requires_grad(gamma) || self.requires_grad(beta) {
            let mut dg = vec![0.0; d];
            let mut db = vec![0.0; d];
            for (gr, xr) in g.chunks(d).zip(xhat.chunks(d)) {
                for j in 0..d {
                    dg[j] += gr[j].as_f64() * xr[j].as_f64();
                    db[j] += gr[j].as_f64();
                }
            }
            if let Some(s) = self.slot(grads, gamma) {
                s.iter_mut().zip(&dg).for_each(|(s, v)| *s += T::from_f64(*v));
            }
            if let Some(s) = self.slot(grads, beta) {
                s.iter_mut().zip(&db).for_each(|(s, v)| *s += T::from_f64(*v));
            }
        }
        if let Some(s) = self.slot(grads, input) {
            let df = d as f64;
            for (r, ((gr, xr), sr)) in g.chunks(d).zip(xhat.chunks(d)).zip(s.chunks_mut(d)).enumerate() {
                let mut sum_dx = 0.0;
                let mut sum_dx_x = 0.0;
                for j in 0..d {
                    let dxh = gr[j].as_f64() * gm[j].as_f64();
                    sum_dx += dxh;
                    sum_dx_x += dxh * xr[j].as_f64();
                }
                for j in 0..d {
                    let dxh = gr[j].as_f64() * gm[j].as_f64();
                    let v = inv_std[r] * (dxh - sum_dx / df - xr[j].as_f64() * sum_dx_x / df);
                    sr[j] += T::from_f64(v);
                }
            }
        }
    }
}
