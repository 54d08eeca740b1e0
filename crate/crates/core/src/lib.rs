//! Statistical noise model for SRAM physically unclonable functions.
//!
//! * [`gbin`]: exact generalized (Poisson) binomial computations.
//! * [`noise_model`]: the hierarchical cell/device/population model, its
//!   samplers, the compound-binomial result and failure probabilities.
//! * [`estimators`]: layer-by-layer estimation of the hierarchy.
//! * [`orderstats`]: order statistics and bit-masking analysis.
//! * [`ingest`]: raw evaluation dumps to per-cell error counts.
//! * [`studies`]: reproducible simulation experiments.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod gbin;
pub mod ingest;
pub mod noise_model;
pub mod optim;
pub mod orderstats;
pub mod quadrature;
pub mod seeding;
pub mod special;
pub mod studies;

pub use error::{Error, Result};
pub use gbin::{BinomialApprox, GeneralizedBinomial, PmfTable};
pub use noise_model::{DeviceParams, HyperParams, ScaledBeta};
