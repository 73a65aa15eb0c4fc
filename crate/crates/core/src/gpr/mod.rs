//! Scalar Gaussian process regression.

pub mod kernel;
pub mod lbfgs;
pub mod likelihood;
pub mod model;
pub mod scaler;

pub use kernel::{eval_kernel, kernel_matrix, Hyperparams, KernelFamily, KernelKind, NOISE_FLOOR};
pub use likelihood::{log_marginal_likelihood, GroupedData};
pub use model::{fit_gp, gp_predict, variance_clamp_count, Bounds, FitOptions, GpModel};
pub use scaler::Scaler;
