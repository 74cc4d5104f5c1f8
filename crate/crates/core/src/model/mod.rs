//! Model definition: data, loading mask, priors, chain state and the
//! deterministic densities shared by the sampler and the diagnostics.

pub mod car;
pub mod data;
pub mod density;
pub mod hyper;
pub mod mask;
pub mod state;

pub use car::{correlation_from_gamma, FactorCov};
pub use data::{Experiment, ExpressionDataset, SampleInfo};
pub use density::{
    log_likelihood_omega, marginal_cov_y, marginal_loglik_y, omega_marginal_cov, sign_flip, spike_slab_diag,
};
pub use hyper::Hyperparameters;
pub use mask::{align, AlignmentReport, LoadingMask};
pub use state::{Model, ModelState};
