//! Datasets, run configuration, training and evaluation drivers, and the
//! `sla` command-line tool for the `sla-core` library.
//!
//! * [`data`]: MNIST IDX files (raw or gzip), class filters, per-class
//!   subsampling, and a synthetic separable generator.
//! * [`config`]: the versioned JSON run configuration.
//! * [`train`]: the seeded training loop and its metrics CSV.
//! * [`eval`]: single, aggregated, self-distilled, and ensemble accuracy.
//! * [`toy`]: linear classifiers on two digits, upright or rotated.
//! * [`ensemble`]: independently seeded members averaged at the logit level.
//! * [`reduce`]: the joint-loss reduction check.
//!
//! The data directory defaults to `data/mnist` and can be overridden with the
//! `SLA_DATA_DIR` environment variable.

pub mod config;
pub mod data;
pub mod ensemble;
mod error;
pub mod eval;
pub mod reduce;
pub mod toy;
pub mod train;

pub use error::{LabError, Result};
