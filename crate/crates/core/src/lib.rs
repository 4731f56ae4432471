//! Gaussian-process emulation of computer experiments with an estimable
//! nugget, and a harness for replicated nugget vs. no-nugget comparisons.
//!
//! The pieces, bottom-up:
//!
//! - [`linalg`]: Cholesky factorization with a diagonal jitter ladder.
//! - [`gp`]: Gaussian correlation with nugget, the σ²-integrated Student-t
//!   marginal likelihood, and Student-t kriging prediction.
//! - [`inference`]: Gamma priors on the ranges and nugget, a
//!   Metropolis-within-Gibbs sampler, and pooled posterior prediction.
//! - [`testbed`]: synthetic simulators, a 1-d Nelder-Mead, and designs.
//! - [`metrics`]: MSE, pointwise coverage, Mahalanobis distance, paired t-test.
//! - [`harness`]: replicated experiments and the canned table configurations.
//! - [`model_file`] / [`io`]: file formats used by the command-line tool.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gp;
pub mod harness;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model_file;
pub mod testbed;

pub use error::{Error, Result};
pub use gp::{Dataset, Hyperparams, PredictiveDist};
pub use linalg::CholFactor;
