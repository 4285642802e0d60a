//! Numerical core for chest X-ray pneumonia classification benchmarks.
//!
//! Everything here is `no_std` with `alloc`: a dense tensor type with
//! reverse-mode automatic differentiation, dense linear algebra (SVD,
//! symmetric eigensolver, k-means, t-SNE), the classical classifiers that
//! run on principal components (PCA, logistic regression, RBF support vector
//! classifier), the pure image operations of the preprocessing pipeline, the
//! five network architectures, optimizer/schedule math and classification
//! metrics.
//!
//! File formats, image decoding, threading and the command line live in the
//! companion `cxr` crate.

#![no_std]
#![allow(clippy::too_many_arguments, clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod arch;
pub mod autograd;
pub mod classical;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use autograd::{Graph, Var};
pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::Tensor;
