//! Single-fidelity Gaussian-process regression with a squared-exponential kernel.

mod dataset;
mod fit;
mod kernel;
mod posterior;

pub use dataset::{Dataset, Standardization};
pub use fit::{fit_gp, log_marginal_likelihood, FitOptions};
pub use kernel::{rbf_kernel, Kernel, KernelParams, SumKernel};
pub use posterior::{GpPosterior, Jitter, JITTER_MAX, JITTER_START};

pub(crate) use dataset::{check_duplicates, validate_rows};
pub(crate) use fit::{lml_and_gradient, log_bounds, multistart_maximize, rbf_log_derivatives, rbf_matrix_of};
pub(crate) use posterior::factorize;
