//! Type-II maximum likelihood for the kernel hyperparameters.

use nalgebra::{DMatrix, DVector};

use super::dataset::{check_duplicates, Dataset, Standardization};
use super::kernel::{Kernel, KernelParams};
use super::posterior::{factorize, kernel_matrix, GpPosterior, Jitter};
use crate::design::shifted_halton;
use crate::error::{check_dim, Error, Result};
use crate::optim::{minimize, Bounds, LbfgsOptions};
use crate::rng::{stream, Purpose};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Knobs of the multi-start likelihood maximization.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Starts drawn from a shifted Halton design over the log-parameter box.
    pub restarts: usize,
    /// Iteration cap of each local quasi-Newton run.
    pub max_iter: usize,
    pub seed: u64,
    /// Center and scale outputs before fitting.
    pub standardize: bool,
    /// Extra start in log-parameter space (model units), e.g. the previous optimum.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 100,
            seed: 0,
            standardize: true,
            warm_start: None,
        }
    }
}

/// `log N(y; 0, K + jitter I)` for the given kernel on raw outputs.
pub fn log_marginal_likelihood(params: &KernelParams, data: &Dataset, jitter: f64) -> Result<f64> {
    check_dim(params.dim(), data.dim())?;
    if !(jitter >= 0.0) {
        return Err(Error::InvalidArgument(format!("jitter must be nonnegative, got {jitter}")));
    }
    let k = kernel_matrix(params, data.inputs());
    let (chol, _) = factorize(&k, params.variance(), Jitter::Fixed(jitter))?;
    let y = DVector::from_column_slice(data.outputs());
    Ok(lml_from_factor(&chol, &y))
}

fn lml_from_factor(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, y: &DVector<f64>) -> f64 {
    let alpha = chol.solve(y);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    -0.5 * y.dot(&alpha) - log_det_half - 0.5 * y.len() as f64 * LN_2PI
}

/// Log marginal likelihood and its gradient with respect to log-parameters.
///
/// `k` is the noiseless covariance; the jitter is proportional to
/// `prior_var`, whose own log-derivatives are `dvar`. `dks[p]` is the
/// derivative of `k` with respect to parameter `p`.
pub(crate) fn lml_and_gradient(
    k: &DMatrix<f64>,
    prior_var: f64,
    dvar: &[f64],
    dks: &[DMatrix<f64>],
    z: &DVector<f64>,
) -> Option<(f64, Vec<f64>)> {
    let (chol, jitter) = factorize(k, prior_var, Jitter::Auto).ok()?;
    let rel = jitter / prior_var;
    let alpha = chol.solve(z);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let value = -0.5 * z.dot(&alpha) - log_det_half - 0.5 * z.len() as f64 * LN_2PI;
    let kinv = chol.inverse();
    let n = z.len();
    // W = alpha alpha^T - K^{-1}
    let mut w = &alpha * alpha.transpose();
    w -= &kinv;
    let w_trace: f64 = (0..n).map(|i| w[(i, i)]).sum();
    let grad = dks
        .iter()
        .zip(dvar)
        .map(|(dk, dv)| 0.5 * (w.component_mul(dk).sum() + rel * dv * w_trace))
        .collect();
    Some((value, grad))
}

/// Log-parameter box: amplitude in `[1e-3, 1e3] * output_sd`, each
/// lengthscale in `[1e-2, 1e2] * input_range_j`.
pub(crate) fn log_bounds(inputs: &[&[f64]], output_sd: f64, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let sd = if output_sd > 0.0 && output_sd.is_finite() { output_sd } else { 1.0 };
    let mut lower = vec![(1e-3 * sd).ln()];
    let mut upper = vec![(1e3 * sd).ln()];
    for j in 0..dim {
        let (lo, hi) = inputs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[j]), hi.max(x[j])));
        let range = if hi > lo { hi - lo } else { 1.0 };
        lower.push((1e-2 * range).ln());
        upper.push((1e2 * range).ln());
    }
    (lower, upper)
}

/// Multi-start maximization of `objective` (value, gradient) over `bounds`.
///
/// Starts are the optional warm start followed by `restarts` Halton points.
/// Returns the best parameters and value.
pub(crate) fn multistart_maximize<F>(
    objective: F,
    bounds: &Bounds,
    opts: &FitOptions,
) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let mut rng = stream(opts.seed, Purpose::Optimizer);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = &opts.warm_start {
        let mut w = w.clone();
        bounds.project(&mut w);
        starts.push(w);
    }
    starts.extend(
        shifted_halton(opts.restarts, bounds.dim(), &mut rng)
            .into_iter()
            .map(|u| bounds.from_unit(&u)),
    );

    let lopts = LbfgsOptions {
        max_iter: opts.max_iter,
        gtol: 1e-6,
        ftol: 1e-10,
        ..LbfgsOptions::default()
    };
    let neg = |theta: &[f64]| match objective(theta) {
        Some((v, g)) if v.is_finite() => (-v, g.into_iter().map(|x| -x).collect()),
        _ => (f64::INFINITY, vec![0.0; theta.len()]),
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut failures = 0;
    for s in &starts {
        let m = minimize(neg, s, bounds, &lopts);
        if !m.f.is_finite() {
            failures += 1;
            continue;
        }
        let value = -m.f;
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((m.x, value));
        }
    }
    best.ok_or_else(|| Error::Fitting {
        restarts: starts.len(),
        diagnostics: format!("{failures} of {} starts had no finite likelihood", starts.len()),
    })
}

/// Derivatives of an RBF kernel matrix with respect to `[ln tau, ln s_j...]`.
pub(crate) fn rbf_log_derivatives(params: &KernelParams, xs: &[&[f64]], k: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let n = xs.len();
    let d = params.dim();
    let mut out = Vec::with_capacity(d + 1);
    out.push(k * 2.0);
    for j in 0..d {
        let s2 = params.lengthscales()[j].powi(2);
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..a {
                let t = (xs[a][j] - xs[b][j]).powi(2) / s2 * k[(a, b)];
                m[(a, b)] = t;
                m[(b, a)] = t;
            }
        }
        out.push(m);
    }
    out
}

pub(crate) fn rbf_matrix_of(params: &KernelParams, xs: &[&[f64]]) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = params.variance();
        for j in 0..i {
            let v = params.eval(xs[i], xs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Objective for a single RBF kernel on standardized outputs `z`.
pub(crate) fn single_objective<'a>(
    xs: &'a [&'a [f64]],
    z: &'a DVector<f64>,
) -> impl Fn(&[f64]) -> Option<(f64, Vec<f64>)> + 'a {
    move |theta: &[f64]| {
        let p = KernelParams::from_log(theta);
        let k = rbf_matrix_of(&p, xs);
        let dks = rbf_log_derivatives(&p, xs, &k);
        let mut dvar = vec![0.0; theta.len()];
        dvar[0] = 2.0 * p.variance();
        lml_and_gradient(&k, p.variance(), &dvar, &dks, z)
    }
}

/// Fit RBF hyperparameters by multi-start marginal-likelihood maximization
/// and condition on `data`.
pub fn fit_gp(data: &Dataset, opts: &FitOptions) -> Result<GpPosterior> {
    if data.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 points to fit, got {}", data.len())));
    }
    let d = data.dim();
    let all_constant = (0..d).all(|j| data.inputs().iter().all(|x| x[j] == data.inputs()[0][j]));
    if all_constant {
        return Err(Error::InvalidArgument("all input columns are constant".into()));
    }
    check_duplicates(data.inputs(), data.outputs())?;

    let st = if opts.standardize {
        Standardization::fit(data.outputs())
    } else {
        Standardization::identity()
    };
    let z = DVector::from_iterator(data.len(), data.outputs().iter().map(|y| st.to_model(*y)));
    let sd = if opts.standardize { 1.0 } else { Standardization::fit(data.outputs()).scale };
    let xs: Vec<&[f64]> = data.inputs().iter().map(|x| x.as_slice()).collect();
    let (lower, upper) = log_bounds(&xs, sd, d);
    let bounds = Bounds::new(lower, upper);

    let objective = single_objective(&xs, &z);
    let (theta, _) = multistart_maximize(objective, &bounds, opts)?;
    let params = KernelParams::from_log(&theta);
    GpPosterior::new(data.clone(), params, st, Jitter::Auto)
}
