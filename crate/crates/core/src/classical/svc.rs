use alloc::vec;
use alloc::vec::Vec;

use super::{class_counts, ClassWeighting};
use crate::error::{bail, Result};
use crate::linalg::{squared_distance, Matrix};

const TAU: f64 = 1e-12;
/// Multipliers at or below this are not kept as support vectors.
pub const SUPPORT_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum Gamma {
    /// `1 / (p · mean per-feature variance)`.
    Auto,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct SvcConfig {
    pub c: f64,
    pub gamma: Gamma,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Cap on pair updates.
    pub max_iter: usize,
    /// Per-class box bound `C · N / (2·N_c)` when balanced.
    pub class_weighting: ClassWeighting,
}

impl Default for SvcConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: Gamma::Auto,
            tol: 1e-3,
            max_iter: 10_000_000,
            class_weighting: ClassWeighting::Balanced,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvcModel {
    /// One row per support vector.
    pub support_vectors: Matrix,
    /// `αᵢ·yᵢ` per support vector.
    pub dual_coeffs: Vec<f64>,
    /// Row index of each support vector in the training matrix.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub c: f64,
    pub gamma: f64,
    /// Box bound applied to class −1 and class +1.
    pub class_c: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
}

impl SvcModel {
    /// `Σ αᵢyᵢ K(xᵢ, x) + b`.
    pub fn decision_function(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.support_vectors.cols() {
            bail!(Data, "model has {} features, input has {}", self.support_vectors.cols(), x.len());
        }
        let mut f = self.bias;
        for (k, &coef) in self.dual_coeffs.iter().enumerate() {
            f += coef * rbf(self.support_vectors.row(k), x, self.gamma);
        }
        Ok(f)
    }
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    libm::exp(-gamma * squared_distance(a, b))
}

/// `1 / (p · mean per-feature variance)` over the rows of `x`.
pub fn auto_gamma(x: &Matrix) -> Result<f64> {
    let means = x.column_means();
    let n = x.rows() as f64;
    let mut var_sum = 0.0;
    for j in 0..x.cols() {
        var_sum += (0..x.rows()).map(|i| { let d = x.get(i, j) - means[j]; d * d }).sum::<f64>() / n;
    }
    if !(var_sum > 0.0) {
        bail!(Data, "features have zero variance; automatic gamma is undefined");
    }
    // p · (var_sum / p)
    Ok(1.0 / var_sum)
}

/// Converts class indices {0, 1} to SVC targets {−1, +1}.
pub fn signed_labels(y: &[usize]) -> Vec<f64> {
    y.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }).collect()
}

/// Dual objective `Σαᵢ − ½ ΣᵢΣⱼ αᵢαⱼyᵢyⱼK(xᵢ, xⱼ)`.
pub fn dual_objective(alpha: &[f64], y: &[f64], kernel: &Matrix) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel.get(i, j);
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

pub fn kernel_matrix(x: &Matrix, gamma: f64) -> Matrix {
    let n = x.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k.set(i, i, 1.0);
        for j in i + 1..n {
            let v = rbf(x.row(i), x.row(j), gamma);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// Full solution of the dual, before support-vector extraction.
#[derive(Clone, Debug)]
pub struct SvcSolution {
    pub alpha: Vec<f64>,
    pub upper: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// SMO with second-order working-set selection on a precomputed kernel.
///
/// `y` holds ±1; `upper[i]` is the box bound of `αᵢ`.
pub fn smo_solve(kernel: &Matrix, y: &[f64], upper: &[f64], tol: f64, max_iter: usize) -> SvcSolution {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * kernel.get(i, j);
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64, c: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64, c: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t], upper[t]) && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t], upper[t]) {
                continue;
            }
            gmax2 = gmax2.max(y[t] * grad[t]);
            if i_sel == usize::MAX {
                continue;
            }
            let b = gmax + y[t] * grad[t];
            if b > 0.0 {
                let a = kernel.get(i_sel, i_sel) + kernel.get(t, t) - 2.0 * kernel.get(i_sel, t);
                let score = -b * b / a.max(TAU);
                if score <= best {
                    best = score;
                    j_sel = t;
                }
            }
        }
        if gmax + gmax2 < tol || i_sel == usize::MAX || j_sel == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;
        let (i, j) = (i_sel, j_sel);
        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        // the clipped pair can land an ulp outside the box
        alpha[i] = alpha[i].clamp(0.0, ci);
        alpha[j] = alpha[j].clamp(0.0, cj);
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // b from free multipliers, or the middle of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= upper[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { 0.5 * (ub + lb) };
    SvcSolution { alpha, upper: upper.to_vec(), bias: -rho, iterations, converged }
}

/// Soft-margin RBF support vector classifier.
///
/// `y` holds class indices {0, 1}; class 1 maps to +1.
pub fn svc_fit(x: &Matrix, y: &[usize], cfg: &SvcConfig) -> Result<SvcModel> {
    if x.rows() != y.len() {
        bail!(Dimension, "{} rows but {} labels", x.rows(), y.len());
    }
    if !(cfg.c > 0.0) {
        bail!(Config, "C must be positive, got {}", cfg.c);
    }
    if let Gamma::Value(g) = cfg.gamma {
        if !(g > 0.0) {
            bail!(Config, "gamma must be positive, got {}", g);
        }
    }
    if !(cfg.tol > 0.0) {
        bail!(Config, "tolerance must be positive, got {}", cfg.tol);
    }
    let counts = class_counts(y)?;
    if counts[0] == 0 || counts[1] == 0 {
        bail!(DegenerateLabels, "both classes are required, counts are {:?}", counts);
    }
    if !x.is_finite() {
        bail!(Data, "SVC input has non-finite entries");
    }
    let gamma = match cfg.gamma {
        Gamma::Auto => auto_gamma(x)?,
        Gamma::Value(g) => g,
    };
    let class_c = match cfg.class_weighting {
        ClassWeighting::Uniform => [cfg.c, cfg.c],
        ClassWeighting::Balanced => {
            let n = y.len() as f64;
            [cfg.c * n / (2.0 * counts[0] as f64), cfg.c * n / (2.0 * counts[1] as f64)]
        }
    };
    let ys = signed_labels(y);
    let upper: Vec<f64> = y.iter().map(|&c| class_c[c]).collect();
    let kernel = kernel_matrix(x, gamma);
    let sol = smo_solve(&kernel, &ys, &upper, cfg.tol, cfg.max_iter);
    let support_indices: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > SUPPORT_EPS).collect();
    Ok(SvcModel {
        support_vectors: x.select_rows(&support_indices),
        dual_coeffs: support_indices.iter().map(|&i| sol.alpha[i] * ys[i]).collect(),
        support_indices,
        bias: sol.bias,
        c: cfg.c,
        gamma,
        class_c,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

/// Class index: 1 when the decision value is non-negative.
pub fn svc_predict(model: &SvcModel, x: &[f64]) -> Result<usize> {
    Ok(usize::from(model.decision_function(x)? >= 0.0))
}
