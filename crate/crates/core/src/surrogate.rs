//! Common view of every Gaussian-process surrogate used by the acquisition.
//!
//! A surrogate is a zero-mean Gaussian process over one or two fidelity
//! outputs, conditioned on noise-free observations, living in standardized
//! model units. Everything the acquisition needs (means, variances, and
//! cross-covariances between arbitrary fidelity/location pairs) follows from
//! the prior covariance, the training cross-covariance vector, and the
//! Cholesky factor of the training covariance.

use nalgebra::{Cholesky, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Standardization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    High,
    Low,
}

impl std::fmt::Display for Fidelity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fidelity::High => "high",
            Fidelity::Low => "low",
        })
    }
}

pub trait Surrogate: Send + Sync {
    fn dim(&self) -> usize;

    /// Whether `fidelity` is a modelled (random) output.
    fn supports(&self, fidelity: Fidelity) -> bool;

    fn standardization(&self) -> Standardization;

    /// Deterministic additive term of the high-fidelity mean, in data units.
    fn known_offset(&self, _x: &[f64]) -> f64 {
        0.0
    }

    /// Prior covariance between `f_a(a)` and `f_b(b)`, model units.
    fn prior_cov_model(&self, a: &[f64], fa: Fidelity, b: &[f64], fb: Fidelity) -> f64;

    /// Prior covariance between `f_fidelity(x)` and every training output.
    fn train_cov_model(&self, x: &[f64], fidelity: Fidelity) -> DVector<f64>;

    /// Factor of the training covariance (jitter included).
    fn factor(&self) -> &Cholesky<f64, Dyn>;

    /// `K^{-1} z` with `z` the standardized training outputs.
    fn weights(&self) -> &DVector<f64>;

    fn n_train(&self) -> usize {
        self.weights().len()
    }

    /// `L^{-1} k(train, x)`, the whitened cross-covariance.
    fn whitened(&self, x: &[f64], fidelity: Fidelity) -> DVector<f64> {
        let k = self.train_cov_model(x, fidelity);
        self.factor()
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Posterior mean in data units.
    fn mean(&self, x: &[f64], fidelity: Fidelity) -> f64 {
        let k = self.train_cov_model(x, fidelity);
        let z = k.dot(self.weights());
        let offset = if fidelity == Fidelity::High { self.known_offset(x) } else { 0.0 };
        offset + self.standardization().to_data(z)
    }

    /// Posterior variance in data units, clamped at zero.
    fn variance(&self, x: &[f64], fidelity: Fidelity) -> f64 {
        let w = self.whitened(x, fidelity);
        let v = self.prior_cov_model(x, fidelity, x, fidelity) - w.norm_squared();
        let s = self.standardization().scale;
        v.max(0.0) * s * s
    }

    /// Posterior mean and variance sharing one cross-covariance evaluation.
    fn moments(&self, x: &[f64], fidelity: Fidelity) -> (f64, f64) {
        let k = self.train_cov_model(x, fidelity);
        let st = self.standardization();
        let offset = if fidelity == Fidelity::High { self.known_offset(x) } else { 0.0 };
        let mean = offset + st.to_data(k.dot(self.weights()));
        let w = self
            .factor()
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("cholesky factor has a positive diagonal");
        let v = self.prior_cov_model(x, fidelity, x, fidelity) - w.norm_squared();
        (mean, v.max(0.0) * st.scale * st.scale)
    }

    /// Posterior covariance between `f_a(a)` and `f_b(b)` in data units.
    /// Diagonal entries are clamped at zero.
    fn covariance(&self, a: &[f64], fa: Fidelity, b: &[f64], fb: Fidelity) -> f64 {
        let wa = self.whitened(a, fa);
        let wb = self.whitened(b, fb);
        let mut c = self.prior_cov_model(a, fa, b, fb) - wa.dot(&wb);
        if fa == fb && a == b {
            c = c.max(0.0);
        }
        let s = self.standardization().scale;
        c * s * s
    }
}

pub(crate) fn check_point(s: &dyn Surrogate, x: &[f64], fidelity: Fidelity) -> Result<()> {
    crate::error::check_dim(s.dim(), x.len())?;
    if !s.supports(fidelity) {
        return Err(Error::InvalidArgument(format!("surrogate does not model the {fidelity} fidelity")));
    }
    Ok(())
}
