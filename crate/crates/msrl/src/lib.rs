//! Adversarial mutual-information training of sufficient representations.
//!
//! The core estimator trains a representer network `R` so that the
//! response is conditionally independent of the predictors given `R(X)`
//! while `R(X)` follows a chosen reference distribution. Two critic
//! networks drive the minimax objective: `D` estimates the mutual
//! information between `Y` and `R(X)` through the Donsker-Varadhan-style
//! dual of the KL divergence, and `Q` estimates the KL divergence between
//! the law of `R(X)` and the reference.
//!
//! Modules:
//! - [`autodiff`]: tape-based reverse-mode differentiation over dense tensors
//! - [`nn`]: feedforward networks, initialization, serialization
//! - [`objective`]: empirical losses (U-statistic MI term, push-forward
//!   term, categorical variant) and the plug-in MI estimate
//! - [`train`]: alternating Adam optimization with early stopping on
//!   validation distance correlation and multi-restart selection
//! - [`dimsel`]: dichotomy-based cross-validation for the intrinsic dimension
//! - [`metrics`]: distance correlation, linear-readout prediction error,
//!   uniformity checks, KDE
//! - [`baselines`]: sliced inverse regression and sliced average variance
//!   estimation
//! - [`data`]: synthetic generators, CSV ingestion, splitting
//!
//! Restarts, folds, and experiment cells fan out through [`exec`], which
//! is rayon-backed under the `parallel` feature (on by default) and falls
//! back to a sequential loop without it.

pub mod autodiff;
pub mod baselines;
pub mod data;
pub mod dimsel;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod objective;
pub mod train;
pub mod util;

pub use error::{Error, Result};
