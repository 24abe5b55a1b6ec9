use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A stationary covariance function.
pub trait Kernel: Clone + Debug + Send + Sync {
    fn dim(&self) -> usize;
    /// `k(a, b)`, no dimension checks.
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;
    /// `k(x, x)`.
    fn variance(&self) -> f64;
}

/// Squared-exponential kernel with one lengthscale per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    amplitude: f64,
    lengthscales: Vec<f64>,
}

impl KernelParams {
    pub fn new(amplitude: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("amplitude must be positive, got {amplitude}")));
        }
        if lengthscales.is_empty() {
            return Err(Error::InvalidArgument("at least one lengthscale required".into()));
        }
        if let Some(s) = lengthscales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!("lengthscales must be positive, got {s}")));
        }
        Ok(Self { amplitude, lengthscales })
    }

    /// Square root of the prior variance.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    /// `[ln amplitude, ln s_1, ..., ln s_d]`
    pub fn to_log(&self) -> Vec<f64> {
        std::iter::once(self.amplitude.ln())
            .chain(self.lengthscales.iter().map(|s| s.ln()))
            .collect()
    }

    pub(crate) fn from_log(theta: &[f64]) -> Self {
        Self {
            amplitude: theta[0].exp(),
            lengthscales: theta[1..].iter().map(|v| v.exp()).collect(),
        }
    }

    #[inline]
    pub(crate) fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for j in 0..self.lengthscales.len() {
            let t = (a[j] - b[j]) / self.lengthscales[j];
            r2 += t * t;
        }
        r2
    }
}

impl Kernel for KernelParams {
    fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    #[inline]
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.amplitude * self.amplitude * (-0.5 * self.scaled_sq_dist(a, b)).exp()
    }

    fn variance(&self) -> f64 {
        self.amplitude * self.amplitude
    }
}

/// Sum of squared-exponential kernels sharing an input space.
#[derive(Debug, Clone, PartialEq)]
pub struct SumKernel(Vec<KernelParams>);

impl SumKernel {
    pub fn new(parts: Vec<KernelParams>) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::InvalidArgument("empty kernel sum".into()));
        };
        for p in &parts {
            check_dim(first.dim(), p.dim())?;
        }
        Ok(Self(parts))
    }

    pub fn parts(&self) -> &[KernelParams] {
        &self.0
    }
}

impl Kernel for SumKernel {
    fn dim(&self) -> usize {
        self.0[0].dim()
    }

    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.0.iter().map(|k| k.eval(a, b)).sum()
    }

    fn variance(&self) -> f64 {
        self.0.iter().map(|k| k.variance()).sum()
    }
}

/// `tau^2 exp(-1/2 sum_j (x_j - x2_j)^2 / s_j^2)`.
pub fn rbf_kernel(x: &[f64], x2: &[f64], params: &KernelParams) -> Result<f64> {
    check_dim(params.dim(), x.len())?;
    check_dim(params.dim(), x2.len())?;
    Ok(params.eval(x, x2))
}
