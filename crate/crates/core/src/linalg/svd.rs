use alloc::vec;
use alloc::vec::Vec;

use super::{dot, symmetric_eigen, Matrix};
use crate::error::{bail, Result};

/// Column count above which [`svd`] switches to the Gram-matrix route.
pub const JACOBI_MAX_COLUMNS: usize = 2048;

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A ≈ U · diag(s) · Vᵀ`.
#[derive(Clone, Debug)]
pub struct SvdResult {
    /// `m × r`, orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, strictly positive.
    pub s: Vec<f64>,
    /// `n × r`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let (m, n, r) = (self.u.rows(), self.v.rows(), self.s.len());
        Matrix::from_fn(m, n, |i, j| (0..r).map(|k| self.u.get(i, k) * self.s[k] * self.v.get(j, k)).sum())
    }

    pub fn truncate(&mut self, rank: usize) {
        if rank < self.s.len() {
            self.s.truncate(rank);
            self.u = self.u.leading_columns(rank);
            self.v = self.v.leading_columns(rank);
        }
    }
}

/// Thin SVD keeping the numerically nonzero singular values, optionally
/// truncated to the leading `rank`.
///
/// Matrices with at most [`JACOBI_MAX_COLUMNS`] columns (or rows) use
/// one-sided Jacobi; wider ones with few rows go through the eigenvectors
/// of the row Gram matrix.
pub fn svd(a: &Matrix, rank: Option<usize>) -> Result<SvdResult> {
    let mut r = if a.cols().min(a.rows()) <= JACOBI_MAX_COLUMNS {
        svd_jacobi(a)?
    } else {
        svd_gram(a)?
    };
    if let Some(k) = rank {
        r.truncate(k);
    }
    Ok(r)
}

fn check_input(a: &Matrix) -> Result<()> {
    if a.rows() == 0 || a.cols() == 0 {
        bail!(Dimension, "SVD of an empty {}x{} matrix", a.rows(), a.cols());
    }
    if !a.is_finite() {
        bail!(Data, "SVD input has non-finite entries");
    }
    Ok(())
}

/// One-sided (Hestenes) Jacobi: rotates column pairs until all are
/// mutually orthogonal; the column norms are then the singular values.
pub fn svd_jacobi(a: &Matrix) -> Result<SvdResult> {
    check_input(a)?;
    let transposed = a.cols() > a.rows();
    let work = if transposed { a.transpose() } else { a.clone() };
    let (m, n) = (work.rows(), work.cols());
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| work.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let eps = f64::EPSILON;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= eps * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        bail!(Divergence, "Jacobi SVD did not converge in {} sweeps", MAX_SWEEPS);
    }

    let norms: Vec<f64> = w.iter().map(|c| libm::sqrt(dot(c, c))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let smax = norms[order[0]];
    let cutoff = smax * eps * m.max(n) as f64;
    let keep: Vec<usize> = order.into_iter().filter(|&j| norms[j] > cutoff && norms[j] > 0.0).collect();
    let s: Vec<f64> = keep.iter().map(|&j| norms[j]).collect();
    let u = Matrix::from_fn(m, keep.len(), |i, k| w[keep[k]][i] / s[k]);
    let vm = Matrix::from_fn(n, keep.len(), |i, k| v[keep[k]][i]);
    Ok(if transposed { SvdResult { u: vm, s, v: u } } else { SvdResult { u, s, v: vm } })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// SVD of a short, wide matrix through the eigenvectors of `A·Aᵀ`.
///
/// The right singular vectors are `Aᵀ·u / σ`, re-orthonormalized by
/// modified Gram-Schmidt. Singular values below `√(m·ε)·σ_max` are not
/// resolvable through the Gram matrix and are dropped.
pub fn svd_gram(a: &Matrix) -> Result<SvdResult> {
    check_input(a)?;
    let (m, n) = (a.rows(), a.cols());
    let eig = symmetric_eigen(&a.gram_rows())?;
    let smax = libm::sqrt(eig.values[0].max(0.0));
    let cutoff = 4.0 * smax * libm::sqrt(m as f64 * f64::EPSILON);
    let keep: Vec<usize> = (0..m).filter(|&k| libm::sqrt(eig.values[k].max(0.0)) > cutoff).collect();
    let s: Vec<f64> = keep.iter().map(|&k| libm::sqrt(eig.values[k])).collect();
    let u = Matrix::from_fn(m, keep.len(), |i, c| eig.vectors.get(i, keep[c]));

    let mut vcols: Vec<Vec<f64>> = Vec::with_capacity(keep.len());
    for (c, &sigma) in s.iter().enumerate() {
        let mut col = vec![0.0; n];
        for i in 0..m {
            let ui = u.get(i, c) / sigma;
            for (x, &aij) in col.iter_mut().zip(a.row(i)) {
                *x += ui * aij;
            }
        }
        for prev in &vcols {
            let proj = dot(prev, &col);
            col.iter_mut().zip(prev).for_each(|(x, &p)| *x -= proj * p);
        }
        let norm = libm::sqrt(dot(&col, &col));
        col.iter_mut().for_each(|x| *x /= norm);
        vcols.push(col);
    }
    let v = Matrix::from_fn(n, keep.len(), |i, c| vcols[c][i]);
    Ok(SvdResult { u, s, v })
}
