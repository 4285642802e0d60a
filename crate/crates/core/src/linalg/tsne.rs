use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use super::{squared_distance, Matrix};
use crate::error::{bail, Result};
use crate::rng;

const P_FLOOR: f64 = 1e-12;
const MIN_GAIN: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default))]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TsneResult {
    /// `n × 2`, centred.
    pub embedding: Matrix,
    /// KL(P‖Q) after each iteration.
    pub kl_history: Vec<f64>,
}

/// Exact t-SNE.
///
/// After early exaggeration a step is kept only if it does not raise the
/// KL divergence; otherwise it is retried as a plain gradient step with a
/// halving step size, and dropped if no size helps.
pub fn tsne_embed(points: &Matrix, cfg: &TsneConfig) -> Result<TsneResult> {
    let n = points.rows();
    if n < 5 {
        bail!(Config, "t-SNE needs at least 5 points, got {}", n);
    }
    if !(cfg.perplexity > 0.0) || cfg.perplexity >= n as f64 {
        bail!(Config, "perplexity {} must lie in (0, {})", cfg.perplexity, n);
    }
    if !points.is_finite() {
        bail!(Data, "t-SNE input has non-finite entries");
    }
    let p = joint_affinities(points, cfg.perplexity);

    let mut r = rng::stream(cfg.seed, &[0x7473]);
    let normal = Normal::new(0.0, 1e-4).unwrap();
    let mut y: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut r)).collect();
    center(&mut y);
    let mut velocity = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut grad = vec![0.0; 2 * n];
    let mut kl_history = Vec::with_capacity(cfg.iterations);
    let mut kl = kl_divergence_flat(&p, &y);

    for it in 0..cfg.iterations {
        let exaggerating = it < cfg.exaggeration_iters;
        let exag = if exaggerating { cfg.exaggeration } else { 1.0 };
        let momentum = if it < cfg.exaggeration_iters { 0.5 } else { 0.8 };
        gradient(&p, &y, exag, &mut grad);
        for i in 0..2 * n {
            let same_sign = (grad[i] > 0.0) == (velocity[i] > 0.0);
            gains[i] = if same_sign { (gains[i] * 0.8).max(MIN_GAIN) } else { gains[i] + 0.2 };
        }
        let mut candidate: Vec<f64> = (0..2 * n)
            .map(|i| {
                let v = momentum * velocity[i] - cfg.learning_rate * gains[i] * grad[i];
                y[i] + v
            })
            .collect();
        center(&mut candidate);
        let cand_kl = kl_divergence_flat(&p, &candidate);
        if exaggerating || cand_kl <= kl {
            for i in 0..2 * n {
                velocity[i] = candidate[i] - y[i];
            }
            y = candidate;
            kl = cand_kl;
        } else {
            velocity.iter_mut().for_each(|v| *v = 0.0);
            gains.iter_mut().for_each(|g| *g = 1.0);
            let mut step = cfg.learning_rate;
            for _ in 0..60 {
                step *= 0.5;
                let mut trial: Vec<f64> = y.iter().zip(&grad).map(|(y, g)| y - step * g).collect();
                center(&mut trial);
                let trial_kl = kl_divergence_flat(&p, &trial);
                if trial_kl <= kl {
                    y = trial;
                    kl = trial_kl;
                    break;
                }
            }
        }
        kl_history.push(kl);
    }
    Ok(TsneResult { embedding: Matrix::new(n, 2, y)?, kl_history })
}

/// Symmetrized input affinities with per-point Gaussian bandwidths chosen so
/// each conditional distribution has the requested perplexity.
fn joint_affinities(points: &Matrix, perplexity: f64) -> Vec<f64> {
    let n = points.rows();
    let target = libm::log(perplexity);
    let mut cond = vec![0.0; n * n];
    let mut dist = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            dist[j] = squared_distance(points.row(i), points.row(j));
        }
        let (mut lo, mut hi, mut beta) = (f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let row = &mut cond[i * n..(i + 1) * n];
        for _ in 0..200 {
            let h = conditional_row(&dist, i, beta, row);
            let diff = h - target;
            if diff.abs() < 1e-10 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = if lo.is_finite() { 0.5 * (beta + lo) } else { beta * 0.5 };
            }
        }
        conditional_row(&dist, i, beta, row);
    }
    let mut p = vec![0.0; n * n];
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / denom).max(P_FLOOR);
            }
        }
    }
    p
}

/// Fills `row` with `p(j|i)` at precision `beta` and returns its entropy.
fn conditional_row(dist: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let dmin = dist.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &d)| d).fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (r, &d)) in row.iter_mut().zip(dist).enumerate() {
        *r = if j == i { 0.0 } else { libm::exp(-beta * (d - dmin)) };
        sum += *r;
    }
    let mut weighted = 0.0;
    for (r, &d) in row.iter_mut().zip(dist) {
        *r /= sum;
        weighted += *r * (d - dmin);
    }
    libm::log(sum) + beta * weighted
}

fn gradient(p: &[f64], y: &[f64], exaggeration: f64, grad: &mut [f64]) {
    let n = y.len() / 2;
    let mut num = vec![0.0; n * n];
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let v = 1.0 / (1.0 + sq(y, i, j));
            num[i * n + j] = v;
            num[j * n + i] = v;
            total += 2.0 * v;
        }
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = num[i * n + j];
            let coeff = 4.0 * (exaggeration * p[i * n + j] - w / total) * w;
            grad[2 * i] += coeff * (y[2 * i] - y[2 * j]);
            grad[2 * i + 1] += coeff * (y[2 * i + 1] - y[2 * j + 1]);
        }
    }
}

#[inline]
fn sq(y: &[f64], i: usize, j: usize) -> f64 {
    let dx = y[2 * i] - y[2 * j];
    let dy = y[2 * i + 1] - y[2 * j + 1];
    dx * dx + dy * dy
}

fn kl_divergence_flat(p: &[f64], y: &[f64]) -> f64 {
    let n = y.len() / 2;
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += 2.0 / (1.0 + sq(y, i, j));
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (1.0 / (1.0 + sq(y, i, j)) / total).max(P_FLOOR);
                let pij = p[i * n + j];
                kl += pij * libm::log(pij / q);
            }
        }
    }
    kl
}

fn center(y: &mut [f64]) {
    let n = (y.len() / 2) as f64;
    let (mx, my) = y.chunks(2).fold((0.0, 0.0), |(a, b), c| (a + c[0], b + c[1]));
    let (mx, my) = (mx / n, my / n);
    for c in y.chunks_mut(2) {
        c[0] -= mx;
        c[1] -= my;
    }
}

/// KL(P‖Q) between the input affinities of `points` at `perplexity` and
/// the Student-t affinities of `embedding`.
pub fn kl_divergence(points: &Matrix, embedding: &Matrix, perplexity: f64) -> Result<f64> {
    if embedding.cols() != 2 || embedding.rows() != points.rows() {
        bail!(Dimension, "embedding {}x{} for {} points", embedding.rows(), embedding.cols(), points.rows());
    }
    Ok(kl_divergence_flat(&joint_affinities(points, perplexity), embedding.data()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cfg(perplexity: f64, iterations: usize, seed: u64) -> TsneConfig {
        TsneConfig { perplexity, iterations, exaggeration_iters: iterations / 4, seed, ..TsneConfig::default() }
    }

    fn random_points(n: usize, d: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        Matrix::from_fn(n, d, |_, _| r.random_range(-1.0..1.0))
    }

    #[test]
    fn rejects_tiny_inputs_and_large_perplexity() {
        assert!(tsne_embed(&random_points(1, 3, 0), &cfg(0.5, 10, 0)).is_err());
        assert!(matches!(tsne_embed(&random_points(10, 3, 0), &cfg(10.0, 10, 0)), Err(crate::Error::Config(_))));
    }

    #[test]
    fn conditional_rows_hit_perplexity() {
        let pts = random_points(30, 4, 1);
        let n = 30;
        let mut dist = vec![0.0; n];
        assert!(joint_affinities(&pts, 5.0).iter().all(|&v| v >= 0.0));
        // independent bisection on one conditional row
        for j in 0..n {
            dist[j] = squared_distance(pts.row(0), pts.row(j));
        }
        let mut row = vec![0.0; n];
        let mut beta = 1.0;
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        for _ in 0..200 {
            let h = conditional_row(&dist, 0, beta, &mut row);
            if h > libm::log(5.0) {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * beta };
            } else {
                hi = beta;
                beta = 0.5 * (lo + hi);
            }
        }
        let entropy: f64 = -row.iter().filter(|&&v| v > 0.0).map(|&v| v * libm::log(v)).sum::<f64>();
        assert!((libm::exp(entropy) - 5.0).abs() < 1e-6);
    }

    #[test]
    fn joint_affinities_sum_to_one() {
        let p = joint_affinities(&random_points(12, 3, 2), 4.0);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_difference_of_kl() {
        let pts = random_points(8, 3, 3);
        let p = joint_affinities(&pts, 3.0);
        let y: Vec<f64> = random_points(8, 2, 4).into_data();
        let mut g = vec![0.0; 16];
        gradient(&p, &y, 1.0, &mut g);
        let h = 1e-6;
        for i in 0..16 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += h;
            ym[i] -= h;
            let fd = (kl_divergence_flat(&p, &yp) - kl_divergence_flat(&p, &ym)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn kl_monotone_after_exaggeration_and_centred() {
        let pts = random_points(40, 5, 5);
        let c = cfg(10.0, 400, 6);
        let out = tsne_embed(&pts, &c).unwrap();
        let tail = &out.kl_history[c.iterations / 2..];
        assert!(tail.windows(2).all(|w| w[1] <= w[0]));
        for j in 0..2 {
            let mean: f64 = out.embedding.column(j).iter().sum::<f64>() / 40.0;
            assert!(mean.abs() < 1e-6);
        }
        let recomputed = kl_divergence(&pts, &out.embedding, 10.0).unwrap();
        assert!((recomputed - out.kl_history.last().unwrap()).abs() < 1e-9);
    }

    #[test]
    fn deterministic_given_seed() {
        let pts = random_points(15, 3, 7);
        let a = tsne_embed(&pts, &cfg(4.0, 60, 1)).unwrap();
        let b = tsne_embed(&pts, &cfg(4.0, 60, 1)).unwrap();
        assert_eq!(a.embedding, b.embedding);
    }
}
