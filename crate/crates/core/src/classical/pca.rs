use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::linalg::{svd, Matrix};

/// How many principal components to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum PcaTarget {
    /// Smallest count whose cumulative explained variance reaches this
    /// fraction.
    Variance(f64),
    Components(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d × p`, orthonormal columns.
    pub components: Matrix,
    pub singular_values: Vec<f64>,
    pub variance_retained: f64,
    /// Training rows the model was fitted on.
    pub n_samples: usize,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.singular_values.len()
    }

    /// Per-component variance of the projected training data.
    pub fn explained_variance(&self) -> Vec<f64> {
        let denom = (self.n_samples - 1) as f64;
        self.singular_values.iter().map(|s| s * s / denom).collect()
    }
}

/// Fits PCA through the SVD of the column-centred data.
///
/// The kept count never exceeds `min(n − 1, d)`.
pub fn pca_fit(x: &Matrix, target: PcaTarget) -> Result<PcaModel> {
    let (n, d) = (x.rows(), x.cols());
    if n < 2 {
        bail!(Config, "PCA needs at least 2 rows, got {}", n);
    }
    match target {
        PcaTarget::Variance(v) if !(v > 0.0 && v <= 1.0) => {
            bail!(Config, "variance target {} outside (0, 1]", v)
        }
        PcaTarget::Components(0) => bail!(Config, "component count must be positive"),
        _ => {}
    }
    let mean = x.column_means();
    let mut centred = x.clone();
    for i in 0..n {
        centred.row_mut(i).iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
    }
    let dec = svd(&centred, None)?;
    let total: f64 = dec.s.iter().map(|s| s * s).sum();
    if total == 0.0 {
        bail!(Data, "all {} rows are identical; no variance to decompose", n);
    }
    let cap = (n - 1).min(d).min(dec.rank());
    let keep = match target {
        PcaTarget::Components(k) => k.min(cap),
        PcaTarget::Variance(v) => {
            let mut acc = 0.0;
            let mut k = cap;
            for (i, s) in dec.s.iter().enumerate().take(cap) {
                acc += s * s;
                if acc / total >= v - 1e-12 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };
    let singular_values = dec.s[..keep].to_vec();
    let variance_retained = singular_values.iter().map(|s| s * s).sum::<f64>() / total;
    Ok(PcaModel {
        mean,
        components: dec.v.leading_columns(keep),
        singular_values,
        variance_retained,
        n_samples: n,
    })
}

/// `(x − mean) · components`.
pub fn pca_transform(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    let d = model.mean.len();
    if x.cols() != d {
        bail!(Data, "PCA fitted on {} features, given {}", d, x.cols());
    }
    let p = model.n_components();
    let mut out = Matrix::zeros(x.rows(), p);
    for i in 0..x.rows() {
        let row = x.row(i);
        for (j, (&v, &m)) in row.iter().zip(&model.mean).enumerate() {
            let c = v - m;
            if c == 0.0 {
                continue;
            }
            let comp = model.components.row(j);
            out.row_mut(i).iter_mut().zip(comp).for_each(|(o, &w)| *o += c * w);
        }
    }
    Ok(out)
}

/// `z · componentsᵀ + mean`.
pub fn pca_inverse_transform(model: &PcaModel, z: &Matrix) -> Result<Matrix> {
    let p = model.n_components();
    if z.cols() != p {
        bail!(Data, "PCA has {} components, given {}", p, z.cols());
    }
    let d = model.mean.len();
    Ok(Matrix::from_fn(z.rows(), d, |i, j| {
        model.mean[j] + z.row(i).iter().zip(model.components.row(j)).map(|(a, b)| a * b).sum::<f64>()
    }))
}
