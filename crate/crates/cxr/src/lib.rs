//! Dataset ingestion, training runs, checkpoints, reports and plots for the
//! chest X-ray pneumonia benchmarks, over the numerical core in `cxr_core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod timing;
pub mod trainer;

pub use error::{Error, Result};
