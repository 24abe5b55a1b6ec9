use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::dataset::{check_duplicates, Dataset, Standardization};
use super::kernel::{Kernel, KernelParams};
use crate::error::{check_dim, Error, Result};
use crate::surrogate::{Fidelity, Surrogate};

/// Relative jitter tried first, as a fraction of the prior variance.
pub const JITTER_START: f64 = 1e-8;
/// Largest relative jitter before giving up.
pub const JITTER_MAX: f64 = 1e-4;

/// Diagonal regularization of a kernel matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jitter {
    /// Start at `JITTER_START` times the prior variance.
    Auto,
    /// Start at this absolute value (model units). Zero means no jitter and
    /// no escalation.
    Fixed(f64),
}

/// Factor `k + jitter I`, multiplying the jitter by ten on failure until it
/// exceeds `JITTER_MAX * prior_var`.
pub(crate) fn factorize(k: &DMatrix<f64>, prior_var: f64, jitter: Jitter) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut j = match jitter {
        Jitter::Auto => JITTER_START * prior_var,
        Jitter::Fixed(j) => j,
    };
    let ceiling = (JITTER_MAX * prior_var).max(j);
    loop {
        let mut m = k.clone();
        if j > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += j;
            }
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, j));
        }
        if j <= 0.0 || j * 10.0 > ceiling * (1.0 + 1e-12) {
            return Err(Error::Factorization { jitter: j });
        }
        j *= 10.0;
    }
}

pub(crate) fn kernel_matrix<K: Kernel>(kernel: &K, xs: &[Vec<f64>]) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = kernel.eval(&xs[i], &xs[i]);
        for j in 0..i {
            let v = kernel.eval(&xs[i], &xs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Posterior of a zero-mean GP conditioned on a noise-free dataset.
///
/// The kernel lives in standardized output units; means and covariances
/// returned by the public methods are in data units.
#[derive(Debug, Clone)]
pub struct GpPosterior<K: Kernel = KernelParams> {
    data: Dataset,
    kernel: K,
    standardization: Standardization,
    jitter: f64,
    factor: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

impl<K: Kernel> GpPosterior<K> {
    /// Condition `kernel` on `data` with the given output map.
    pub fn new(data: Dataset, kernel: K, standardization: Standardization, jitter: Jitter) -> Result<Self> {
        check_dim(kernel.dim(), data.dim())?;
        check_duplicates(data.inputs(), data.outputs())?;
        let k = kernel_matrix(&kernel, data.inputs());
        let (factor, jitter) = factorize(&k, kernel.variance(), jitter)?;
        let z = DVector::from_iterator(data.len(), data.outputs().iter().map(|y| standardization.to_model(*y)));
        let weights = factor.solve(&z);
        Ok(Self {
            data,
            kernel,
            standardization,
            jitter,
            factor,
            weights,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn kernel(&self) -> &K {
        &self.kernel
    }

    /// Absolute jitter used, model units.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Prior variance `k(x, x)` in data units.
    pub fn prior_variance(&self) -> f64 {
        self.kernel.variance() * self.standardization.scale.powi(2)
    }

    /// Same hyperparameters and output map, different data.
    pub fn refit_frozen(&self, data: Dataset) -> Result<Self> {
        Self::new(data, self.kernel.clone(), self.standardization, Jitter::Auto)
    }

    pub fn posterior_mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.kernel.dim(), x.len())?;
        Ok(self.mean(x, Fidelity::High))
    }

    pub fn posterior_cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        check_dim(self.kernel.dim(), x.len())?;
        check_dim(self.kernel.dim(), x2.len())?;
        Ok(self.covariance(x, Fidelity::High, x2, Fidelity::High))
    }

    pub fn posterior_var(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.kernel.dim(), x.len())?;
        Ok(self.variance(x, Fidelity::High))
    }

    /// Reconstruct `L L^T`, for checking the factorization.
    pub fn reconstructed_cov(&self) -> DMatrix<f64> {
        let l = self.factor.l();
        &l * l.transpose()
    }
}

impl<K: Kernel> Surrogate for GpPosterior<K> {
    fn dim(&self) -> usize {
        self.kernel.dim()
    }

    fn supports(&self, fidelity: Fidelity) -> bool {
        fidelity == Fidelity::High
    }

    fn standardization(&self) -> Standardization {
        self.standardization
    }

    fn prior_cov_model(&self, a: &[f64], _fa: Fidelity, b: &[f64], _fb: Fidelity) -> f64 {
        self.kernel.eval(a, b)
    }

    fn train_cov_model(&self, x: &[f64], _fidelity: Fidelity) -> DVector<f64> {
        DVector::from_iterator(self.data.len(), self.data.inputs().iter().map(|xi| self.kernel.eval(x, xi)))
    }

    fn factor(&self) -> &Cholesky<f64, Dyn> {
        &self.factor
    }

    fn weights(&self) -> &DVector<f64> {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::SumKernel;
    use crate::rng::{stream, Purpose};
    use rand::RngExt;

    fn params(tau: f64, s: &[f64]) -> KernelParams {
        KernelParams::new(tau, s.to_vec()).unwrap()
    }

    /// Direct 2x2 inverse, no factorization involved.
    fn two_point_oracle(k: &KernelParams, xs: [f64; 2], ys: [f64; 2], x: f64, x2: f64) -> (f64, f64) {
        let kk = |a: f64, b: f64| k.eval(&[a], &[b]);
        let (a, b, d) = (kk(xs[0], xs[0]), kk(xs[0], xs[1]), kk(xs[1], xs[1]));
        let det = a * d - b * b;
        let inv = [[d / det, -b / det], [-b / det, a / det]];
        let kx = [kk(x, xs[0]), kk(x, xs[1])];
        let kx2 = [kk(x2, xs[0]), kk(x2, xs[1])];
        let mut mean = 0.0;
        let mut quad = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                mean += kx[i] * inv[i][j] * ys[j];
                quad += kx[i] * inv[i][j] * kx2[j];
            }
        }
        (mean, kk(x, x2) - quad)
    }

    fn two_point_gp() -> GpPosterior {
        let data = Dataset::new(vec![vec![0.0], vec![1.3]], vec![0.7, -1.1]).unwrap();
        GpPosterior::new(data, params(1.5, &[0.9]), Standardization::identity(), Jitter::Fixed(0.0)).unwrap()
    }

    #[test]
    fn two_point_mean_and_cov_match_explicit_inverse() {
        let gp = two_point_gp();
        let k = params(1.5, &[0.9]);
        for (x, x2) in [(0.4, 0.4), (0.4, -0.8), (2.5, 1.0)] {
            let (m, c) = two_point_oracle(&k, [0.0, 1.3], [0.7, -1.1], x, x2);
            assert!((gp.posterior_mean(&[x]).unwrap() - m).abs() < 1e-12);
            assert!((gp.posterior_cov(&[x], &[x2]).unwrap() - c).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolates_training_data() {
        let gp = two_point_gp();
        assert!((gp.posterior_mean(&[0.0]).unwrap() - 0.7).abs() < 1e-12);
        assert!((gp.posterior_mean(&[1.3]).unwrap() + 1.1).abs() < 1e-12);
        assert!(gp.posterior_var(&[1.3]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let gp = two_point_gp();
        assert!(gp.posterior_mean(&[1e3]).unwrap().abs() < 1e-6 * 1.1);
        assert!((gp.posterior_var(&[1e3]).unwrap() - 2.25).abs() < 1e-12);
    }

    #[test]
    fn coincident_inputs_without_jitter_fail() {
        let data = Dataset::new(vec![vec![0.5], vec![0.5]], vec![1.0, 1.0]).unwrap();
        let r = GpPosterior::new(data, params(1.0, &[1.0]), Standardization::identity(), Jitter::Fixed(0.0));
        assert!(matches!(r, Err(Error::Factorization { .. })));
    }

    #[test]
    fn jitter_escalates_for_near_duplicates() {
        let data = Dataset::new(vec![vec![0.5], vec![0.5 + 1e-9]], vec![1.0, 1.0]).unwrap();
        let gp = GpPosterior::new(data, params(1.0, &[1.0]), Standardization::identity(), Jitter::Auto).unwrap();
        assert!(gp.jitter() >= 1e-8 && gp.jitter() <= 1e-4);
    }

    #[test]
    fn factor_reconstructs_kernel_matrix() {
        let mut rng = stream(11, Purpose::Mc);
        let xs: Vec<Vec<f64>> = (0..15).map(|_| vec![rng.random::<f64>() * 4.0, rng.random::<f64>()]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0].sin() + x[1]).collect();
        let k = params(1.2, &[0.8, 0.5]);
        let gp = GpPosterior::new(Dataset::new(xs.clone(), ys).unwrap(), k.clone(), Standardization::identity(), Jitter::Auto)
            .unwrap();
        let mut target = kernel_matrix(&k, &xs);
        for i in 0..xs.len() {
            target[(i, i)] += gp.jitter();
        }
        let diff = (gp.reconstructed_cov() - &target).norm() / target.norm();
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn standardized_posterior_interpolates_in_data_units() {
        let data = Dataset::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![100.0, 104.0, 101.0]).unwrap();
        let st = Standardization::fit(data.outputs());
        let gp = GpPosterior::new(data, params(1.0, &[1.0]), st, Jitter::Auto).unwrap();
        for (x, y) in [(0.0, 100.0), (1.0, 104.0), (2.0, 101.0)] {
            assert!((gp.posterior_mean(&[x]).unwrap() - y).abs() < 1e-6 * 4.0);
        }
        // far from data the mean reverts to the sample mean
        assert!((gp.posterior_mean(&[1e4]).unwrap() - 305.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn sum_kernel_posterior_builds() {
        let k = SumKernel::new(vec![params(1.0, &[1.0]), params(0.5, &[0.2])]).unwrap();
        let data = Dataset::new(vec![vec![0.0], vec![1.0]], vec![1.0, 2.0]).unwrap();
        let gp = GpPosterior::new(data, k, Standardization::identity(), Jitter::Fixed(0.0)).unwrap();
        assert!((gp.posterior_var(&[50.0]).unwrap() - 1.25).abs() < 1e-12);
    }
}
