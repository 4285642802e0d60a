use alloc::vec;
use alloc::vec::Vec;

use super::{class_counts, ClassWeighting};
use crate::error::{bail, Result};
use crate::linalg::{dot, Matrix};

const ARMIJO_C: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct LogRegConfig {
    /// L2 penalty strength λ in `(λ/2)·‖w‖²`; the bias is not penalized.
    pub l2: f64,
    pub class_weighting: ClassWeighting,
    pub max_iter: usize,
    /// Stop once the gradient norm falls to this value.
    pub tol: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { l2: 0.001, class_weighting: ClassWeighting::Balanced, max_iter: 20_000, tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    /// Sample weight of class 0 and class 1.
    pub class_weights: [f64; 2],
    /// Objective after each accepted step, starting from the initial point.
    pub loss_history: Vec<f64>,
    pub converged: bool,
}

impl LogRegModel {
    pub fn final_loss(&self) -> f64 {
        *self.loss_history.last().unwrap()
    }
}

/// Per-class sample weights `N / (2·N_c)`.
pub fn balanced_class_weights(labels: &[usize]) -> Result<[f64; 2]> {
    let counts = class_counts(labels)?;
    if counts[0] == 0 || counts[1] == 0 {
        bail!(DegenerateLabels, "both classes are required, counts are {:?}", counts);
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * counts[0] as f64), n / (2.0 * counts[1] as f64)])
}

/// Mean weighted binary cross-entropy plus `(λ/2)·‖w‖²`.
pub fn logreg_objective(x: &Matrix, y: &[usize], sample_w: &[f64], w: &[f64], b: f64, l2: f64) -> f64 {
    let n = x.rows();
    let mut total = 0.0;
    for i in 0..n {
        let z = dot(x.row(i), w) + b;
        // log(1 + e^z) − y·z, evaluated stably
        let softplus = if z > 0.0 { z + libm::log1p(libm::exp(-z)) } else { libm::log1p(libm::exp(z)) };
        total += sample_w[i] * (softplus - y[i] as f64 * z);
    }
    total / n as f64 + 0.5 * l2 * dot(w, w)
}

fn objective_gradient(x: &Matrix, y: &[usize], sample_w: &[f64], w: &[f64], b: f64, l2: f64) -> (Vec<f64>, f64) {
    let n = x.rows();
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for i in 0..n {
        let r = sample_w[i] * (sigmoid(dot(x.row(i), w) + b) - y[i] as f64) / n as f64;
        gw.iter_mut().zip(x.row(i)).for_each(|(g, &xi)| *g += r * xi);
        gb += r;
    }
    gw.iter_mut().zip(w).for_each(|(g, &wi)| *g += l2 * wi);
    (gw, gb)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Full-batch gradient descent with Armijo backtracking from `w = 0, b = 0`.
pub fn logreg_fit(x: &Matrix, y: &[usize], cfg: &LogRegConfig) -> Result<LogRegModel> {
    if x.rows() != y.len() {
        bail!(Dimension, "{} rows but {} labels", x.rows(), y.len());
    }
    if !(cfg.l2 >= 0.0) || !(cfg.tol > 0.0) {
        bail!(Config, "l2 must be >= 0 and tol > 0, got l2={} tol={}", cfg.l2, cfg.tol);
    }
    let class_weights = match cfg.class_weighting {
        ClassWeighting::Balanced => balanced_class_weights(y)?,
        ClassWeighting::Uniform => {
            let c = class_counts(y)?;
            if c[0] == 0 || c[1] == 0 {
                bail!(DegenerateLabels, "both classes are required, counts are {:?}", c);
            }
            [1.0, 1.0]
        }
    };
    if !x.is_finite() {
        bail!(Data, "logistic regression input has non-finite entries");
    }
    let sample_w: Vec<f64> = y.iter().map(|&c| class_weights[c]).collect();
    let p = x.cols();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut loss = logreg_objective(x, y, &sample_w, &w, b, cfg.l2);
    let mut history = vec![loss];
    let mut step = 1.0;
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let (gw, gb) = objective_gradient(x, y, &sample_w, &w, b, cfg.l2);
        let gnorm2 = dot(&gw, &gw) + gb * gb;
        if libm::sqrt(gnorm2) <= cfg.tol {
            converged = true;
            break;
        }
        step *= 2.0;
        let mut accepted = false;
        for _ in 0..60 {
            let nw: Vec<f64> = w.iter().zip(&gw).map(|(w, g)| w - step * g).collect();
            let nb = b - step * gb;
            let nl = logreg_objective(x, y, &sample_w, &nw, nb, cfg.l2);
            if nl <= loss - ARMIJO_C * step * gnorm2 {
                w = nw;
                b = nb;
                loss = nl;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent left at machine precision
            converged = true;
            break;
        }
        history.push(loss);
    }
    Ok(LogRegModel { weights: w, bias: b, l2: cfg.l2, class_weights, loss_history: history, converged })
}

/// `sigmoid(w·x + b)`.
pub fn logreg_predict_proba(model: &LogRegModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.weights.len() {
        bail!(Data, "model has {} weights, input has {} features", model.weights.len(), x.len());
    }
    Ok(sigmoid(dot(&model.weights, x) + model.bias))
}

/// Class 1 iff the probability is at least 0.5.
pub fn logreg_predict(model: &LogRegModel, x: &[f64]) -> Result<usize> {
    Ok(usize::from(logreg_predict_proba(model, x)? >= 0.5))
}
