//! Bi-fidelity autoregressive Gaussian process `f_h = f_l + d`.
//!
//! `f_l` and the difference `d` are independent zero-mean processes with RBF
//! kernels `k_l` and `k_d`. Observations of both fidelities are conditioned on
//! jointly through the block covariance of `[Y_h; Y_l]`:
//!
//! ```text
//! | k_l(Xh,Xh) + k_d(Xh,Xh)   k_l(Xh,Xl) |
//! | k_l(Xl,Xh)                k_l(Xl,Xl) |
//! ```
//!
//! The known-cheap-model variant (`f_l` evaluated exactly, only `d` learned)
//! is [`KnownLowSurrogate`], a thin wrapper over a single-fidelity posterior.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::gp::{
    check_duplicates, factorize, fit_gp, lml_and_gradient, log_bounds, multistart_maximize, rbf_log_derivatives,
    rbf_matrix_of, validate_rows, Dataset, FitOptions, GpPosterior, Jitter, Kernel, KernelParams, Standardization,
};
use crate::optim::Bounds;
use crate::surrogate::{check_point, Fidelity, Surrogate};

/// Observations of both fidelities. Designs need not be nested.
#[derive(Debug, Clone, PartialEq)]
pub struct BiDataset {
    high_inputs: Vec<Vec<f64>>,
    high_outputs: Vec<f64>,
    low_inputs: Vec<Vec<f64>>,
    low_outputs: Vec<f64>,
}

impl BiDataset {
    pub fn new(
        high_inputs: Vec<Vec<f64>>,
        high_outputs: Vec<f64>,
        low_inputs: Vec<Vec<f64>>,
        low_outputs: Vec<f64>,
    ) -> Result<Self> {
        if high_inputs.is_empty() {
            return Err(Error::InvalidArgument("need at least one high-fidelity point".into()));
        }
        validate_rows(&high_inputs, &high_outputs)?;
        validate_rows(&low_inputs, &low_outputs)?;
        let d = high_inputs[0].len();
        if let Some(x) = low_inputs.first() {
            check_dim(d, x.len())?;
        }
        Ok(Self {
            high_inputs,
            high_outputs,
            low_inputs,
            low_outputs,
        })
    }

    pub fn dim(&self) -> usize {
        self.high_inputs[0].len()
    }

    pub fn n_high(&self) -> usize {
        self.high_outputs.len()
    }

    pub fn n_low(&self) -> usize {
        self.low_outputs.len()
    }

    pub fn high_inputs(&self) -> &[Vec<f64>] {
        &self.high_inputs
    }

    pub fn high_outputs(&self) -> &[f64] {
        &self.high_outputs
    }

    pub fn low_inputs(&self) -> &[Vec<f64>] {
        &self.low_inputs
    }

    pub fn low_outputs(&self) -> &[f64] {
        &self.low_outputs
    }

    pub fn push(&mut self, fidelity: Fidelity, x: Vec<f64>, y: f64) -> Result<()> {
        validate_rows(std::slice::from_ref(&x), &[y])?;
        check_dim(self.dim(), x.len())?;
        match fidelity {
            Fidelity::High => {
                self.high_inputs.push(x);
                self.high_outputs.push(y);
            }
            Fidelity::Low => {
                self.low_inputs.push(x);
                self.low_outputs.push(y);
            }
        }
        Ok(())
    }

    /// `[Y_h; Y_l]`
    pub fn stacked_outputs(&self) -> Vec<f64> {
        self.high_outputs.iter().chain(&self.low_outputs).copied().collect()
    }

    fn all_inputs(&self) -> Vec<&[f64]> {
        self.high_inputs
            .iter()
            .chain(&self.low_inputs)
            .map(|x| x.as_slice())
            .collect()
    }
}

/// The four-block prior covariance of `[Y_h; Y_l]`, without jitter.
pub fn build_joint_cov(data: &BiDataset, low: &KernelParams, diff: &KernelParams) -> Result<DMatrix<f64>> {
    check_dim(data.dim(), low.dim())?;
    check_dim(data.dim(), diff.dim())?;
    let (nh, nl) = (data.n_high(), data.n_low());
    let n = nh + nl;
    let xs = data.all_inputs();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut v = low.eval(xs[i], xs[j]);
            if i < nh && j < nh {
                v += diff.eval(xs[i], xs[j]);
            }
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Joint posterior of `(f_h, f_l)` given both fidelities' observations.
#[derive(Debug, Clone)]
pub struct BiGpPosterior {
    data: BiDataset,
    low_params: KernelParams,
    diff_params: KernelParams,
    standardization: Standardization,
    jitter: f64,
    joint_factor: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

impl BiGpPosterior {
    /// Condition fixed kernels on `data`. `standardization` maps both
    /// fidelities' outputs with one common offset and scale.
    pub fn new(
        data: BiDataset,
        low_params: KernelParams,
        diff_params: KernelParams,
        standardization: Standardization,
        jitter: Jitter,
    ) -> Result<Self> {
        check_duplicates(data.high_inputs(), data.high_outputs())?;
        check_duplicates(data.low_inputs(), data.low_outputs())?;
        let k = build_joint_cov(&data, &low_params, &diff_params)?;
        let prior_var = low_params.variance() + diff_params.variance();
        let (joint_factor, jitter) = factorize(&k, prior_var, jitter)?;
        let z = DVector::from_iterator(
            data.n_high() + data.n_low(),
            data.stacked_outputs().into_iter().map(|y| standardization.to_model(y)),
        );
        let weights = joint_factor.solve(&z);
        Ok(Self {
            data,
            low_params,
            diff_params,
            standardization,
            jitter,
            joint_factor,
            weights,
        })
    }

    pub fn data(&self) -> &BiDataset {
        &self.data
    }

    pub fn low_params(&self) -> &KernelParams {
        &self.low_params
    }

    pub fn diff_params(&self) -> &KernelParams {
        &self.diff_params
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Same kernels and output map, new data.
    pub fn refit_frozen(&self, data: BiDataset) -> Result<Self> {
        Self::new(
            data,
            self.low_params.clone(),
            self.diff_params.clone(),
            self.standardization,
            Jitter::Auto,
        )
    }

    /// Conditional mean and variance of `f_fidelity(x)`, variance clamped at 0.
    pub fn bifi_posterior_moments(&self, x: &[f64], fidelity: Fidelity) -> Result<(f64, f64)> {
        check_point(self, x, fidelity)?;
        Ok(self.moments(x, fidelity))
    }

    /// Conditional covariance of `f_a(x)` and `f_b(x2)`.
    pub fn bifi_cross_cov(&self, x: &[f64], fidelity_a: Fidelity, x2: &[f64], fidelity_b: Fidelity) -> Result<f64> {
        check_point(self, x, fidelity_a)?;
        check_point(self, x2, fidelity_b)?;
        Ok(self.covariance(x, fidelity_a, x2, fidelity_b))
    }
}

impl Surrogate for BiGpPosterior {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn supports(&self, _fidelity: Fidelity) -> bool {
        true
    }

    fn standardization(&self) -> Standardization {
        self.standardization
    }

    fn prior_cov_model(&self, a: &[f64], fa: Fidelity, b: &[f64], fb: Fidelity) -> f64 {
        let mut v = self.low_params.eval(a, b);
        if fa == Fidelity::High && fb == Fidelity::High {
            v += self.diff_params.eval(a, b);
        }
        v
    }

    fn train_cov_model(&self, x: &[f64], fidelity: Fidelity) -> DVector<f64> {
        let nh = self.data.n_high();
        let n = nh + self.data.n_low();
        let mut k = DVector::zeros(n);
        for (i, xi) in self.data.high_inputs().iter().enumerate() {
            k[i] = self.low_params.eval(x, xi);
            if fidelity == Fidelity::High {
                k[i] += self.diff_params.eval(x, xi);
            }
        }
        for (i, xi) in self.data.low_inputs().iter().enumerate() {
            k[nh + i] = self.low_params.eval(x, xi);
        }
        k
    }

    fn factor(&self) -> &Cholesky<f64, Dyn> {
        &self.joint_factor
    }

    fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
}

/// Jointly fit `(k_l, k_d)` by multi-start maximum likelihood of `[Y_h; Y_l]`.
///
/// `opts.warm_start` is `[log k_l params..., log k_d params...]`.
pub fn fit_bifi_gp(data: &BiDataset, opts: &FitOptions) -> Result<BiGpPosterior> {
    if data.n_high() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 high-fidelity points, got {}",
            data.n_high()
        )));
    }
    check_duplicates(data.high_inputs(), data.high_outputs())?;
    check_duplicates(data.low_inputs(), data.low_outputs())?;
    let d = data.dim();
    let all = data.stacked_outputs();
    let st = if opts.standardize {
        Standardization::fit(&all)
    } else {
        Standardization::identity()
    };
    let sd = if opts.standardize { 1.0 } else { Standardization::fit(&all).scale };
    let z = DVector::from_iterator(all.len(), all.iter().map(|y| st.to_model(*y)));
    let xs = data.all_inputs();
    let (lo, hi) = log_bounds(&xs, sd, d);
    let bounds = Bounds::new([lo.clone(), lo].concat(), [hi.clone(), hi].concat());

    let nh = data.n_high();
    let xh: Vec<&[f64]> = xs[..nh].to_vec();
    let objective = |theta: &[f64]| {
        let low = KernelParams::from_log(&theta[..=d]);
        let diff = KernelParams::from_log(&theta[d + 1..]);
        let kl = rbf_matrix_of(&low, &xs);
        let kd = rbf_matrix_of(&diff, &xh);
        let mut k = kl.clone();
        k.view_mut((0, 0), (nh, nh)).zip_apply(&kd, |a, b| *a += b);

        let mut dks = rbf_log_derivatives(&low, &xs, &kl);
        let n = xs.len();
        for dkd in rbf_log_derivatives(&diff, &xh, &kd) {
            let mut m = DMatrix::zeros(n, n);
            m.view_mut((0, 0), (nh, nh)).copy_from(&dkd);
            dks.push(m);
        }
        let mut dvar = vec![0.0; theta.len()];
        dvar[0] = 2.0 * low.variance();
        dvar[d + 1] = 2.0 * diff.variance();
        lml_and_gradient(&k, low.variance() + diff.variance(), &dvar, &dks, &z)
    };
    let (theta, _) = multistart_maximize(objective, &bounds, opts)?;
    BiGpPosterior::new(
        data.clone(),
        KernelParams::from_log(&theta[..=d]),
        KernelParams::from_log(&theta[d + 1..]),
        st,
        Jitter::Auto,
    )
}

/// Deterministic cheap model evaluated exactly.
pub type KnownModel = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `f_h(x) = f_l(x) + d(x)` with `f_l` known and `d` a fitted GP.
#[derive(Clone)]
pub struct KnownLowSurrogate {
    difference: GpPosterior,
    low: KnownModel,
}

impl std::fmt::Debug for KnownLowSurrogate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnownLowSurrogate")
            .field("difference", &self.difference)
            .finish_non_exhaustive()
    }
}

impl KnownLowSurrogate {
    pub fn new(difference: GpPosterior, low: KnownModel) -> Self {
        Self { difference, low }
    }

    pub fn difference(&self) -> &GpPosterior {
        &self.difference
    }

    pub fn low_model(&self) -> &KnownModel {
        &self.low
    }
}

impl Surrogate for KnownLowSurrogate {
    fn dim(&self) -> usize {
        self.difference.dim()
    }

    fn supports(&self, fidelity: Fidelity) -> bool {
        fidelity == Fidelity::High
    }

    fn standardization(&self) -> Standardization {
        self.difference.standardization()
    }

    fn known_offset(&self, x: &[f64]) -> f64 {
        (self.low)(x)
    }

    fn prior_cov_model(&self, a: &[f64], fa: Fidelity, b: &[f64], fb: Fidelity) -> f64 {
        self.difference.prior_cov_model(a, fa, b, fb)
    }

    fn train_cov_model(&self, x: &[f64], fidelity: Fidelity) -> DVector<f64> {
        self.difference.train_cov_model(x, fidelity)
    }

    fn factor(&self) -> &Cholesky<f64, Dyn> {
        self.difference.factor()
    }

    fn weights(&self) -> &DVector<f64> {
        self.difference.weights()
    }
}

/// Residuals `Y_h - f_l(X_h)` for the known-cheap-model mode.
pub fn difference_data(high_data: &Dataset, known_low: &KnownModel) -> Result<Dataset> {
    let residuals = high_data
        .inputs()
        .iter()
        .zip(high_data.outputs())
        .map(|(x, y)| {
            let l = known_low(x);
            if l.is_finite() {
                Ok(y - l)
            } else {
                Err(Error::Evaluation {
                    x: x.clone(),
                    reason: format!("low-fidelity model returned {l}"),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    high_data.with_outputs(residuals)
}

/// Fit a GP to the residuals of `high_data` against the known cheap model.
pub fn fit_difference_gp(high_data: &Dataset, known_low: KnownModel, opts: &FitOptions) -> Result<KnownLowSurrogate> {
    let residuals = difference_data(high_data, &known_low)?;
    let gp = fit_gp(&residuals, opts)?;
    Ok(KnownLowSurrogate::new(gp, known_low))
}
