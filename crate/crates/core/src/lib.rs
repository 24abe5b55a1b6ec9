//! Active-learning estimation of small failure probabilities.
//!
//! Gaussian-process surrogates (single fidelity, bi-fidelity, or a known
//! cheap model plus a learned difference) are refined one sample at a time,
//! each sample chosen to most reduce an upper bound on the variance of the
//! failure-probability estimate, per unit of evaluation cost.

pub mod acquisition;
pub mod active;
pub mod bifi;
pub mod cli;
pub mod design;
pub mod error;
pub mod gp;
pub mod optim;
pub mod problems;
pub mod rng;
pub mod surrogate;

pub use error::{Error, Result};
pub use surrogate::{Fidelity, Surrogate};
