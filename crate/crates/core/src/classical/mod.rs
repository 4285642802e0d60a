//! Classical classifiers over principal-component features.

mod logreg;
mod pca;
mod svc;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};

pub use logreg::{
    balanced_class_weights, logreg_fit, logreg_objective, logreg_predict, logreg_predict_proba, LogRegConfig,
    LogRegModel,
};
pub use pca::{pca_fit, pca_inverse_transform, pca_transform, PcaModel, PcaTarget};
pub use svc::{
    auto_gamma, dual_objective, kernel_matrix, rbf, signed_labels, smo_solve, svc_fit, svc_predict, Gamma,
    SvcConfig, SvcModel, SvcSolution, SUPPORT_EPS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ClassWeighting {
    /// Class `c` weighs `N / (2·N_c)`.
    Balanced,
    Uniform,
}

/// Counts of class 0 and class 1; any other label is an error.
pub fn class_counts(labels: &[usize]) -> Result<[usize; 2]> {
    let mut c = [0; 2];
    for (i, &l) in labels.iter().enumerate() {
        if l > 1 {
            bail!(Label, "label {} at index {} is not binary", l, i);
        }
        c[l] += 1;
    }
    Ok(c)
}

/// Gives each cluster the most common training label among its members.
///
/// Ties go to the lower class index; an empty cluster takes the overall
/// majority label.
pub fn majority_label_map(assignments: &[usize], labels: &[usize], k: usize) -> Result<Vec<usize>> {
    if assignments.len() != labels.len() {
        bail!(Dimension, "{} assignments but {} labels", assignments.len(), labels.len());
    }
    let mut votes = vec![[0usize; 2]; k];
    for (&a, &l) in assignments.iter().zip(labels) {
        if a >= k || l > 1 {
            bail!(Label, "cluster {} / label {} out of range", a, l);
        }
        votes[a][l] += 1;
    }
    let overall = class_counts(labels)?;
    let pick = |v: [usize; 2]| usize::from(v[1] > v[0]);
    Ok(votes.iter().map(|&v| if v == [0, 0] { pick(overall) } else { pick(v) }).collect())
}
