//! Subspace theory of relaxed maximum-likelihood blind channel estimation for
//! orthogonal space-time block codes.
//!
//! The crate computes the ambiguity spaces of the blind estimator, checks
//! their structure (isometry onto the estimation subspace, Hurwitz–Radon
//! bases, almost-sure dimension), and runs the estimator on simulated links.

pub mod census;
pub mod embed;
pub mod estimator;
pub mod error;
pub mod gamma;
pub mod kyfan;
pub mod ostbc;
pub mod random;
pub mod subspace;

pub use error::{Error, Result};
