//! Infinite latent support vector machines.
//!
//! Two models share the machinery in this crate:
//!
//! * [`ilsvm`]: single-task multi-way classification on latent binary
//!   features `z_n` drawn from an Indian buffet process, with a linear-Gaussian
//!   likelihood `x_n ~ N(W z_n, σ²I)` and large-margin constraints on the
//!   expected discriminant.
//! * [`mt_ilsvm`]: multi-task binary classification with a shared latent
//!   projection `Z` (rows are input dimensions) and per-task classifiers.
//!
//! Inference is truncated mean-field variational inference alternating with
//! SVM dual solves ([`svm`]).

pub mod conjugates;
pub mod data;
pub mod error;
pub mod ibp;
pub mod ilsvm;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod mt_ilsvm;
pub mod special;
pub mod svm;

pub use error::{Error, Result};
