// Validation code uses negated comparisons (`!(x > 0.0)`) so that NaN
// inputs fail closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Simulation and verification toolkit for resampling reshuffling in
//! hyperparameter optimization.
//!
//! The pieces fit together as follows: [`splits`] generates validation
//! index sets for six resampling schemes; [`tau`] evaluates the limiting
//! covariance parameters those schemes induce on the validation-loss
//! surface; [`gp`] simulates loss surfaces under the resulting Gaussian
//! noise model; [`regret`] computes the regret bound and its ingredient
//! constants; and [`empirics`] verifies the covariance predictions with a
//! fully tractable learner and a synthetic random-search harness.

pub mod empirics;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod regret;
pub mod rng;
pub mod splits;
pub mod tau;

pub use error::{Error, Result};
