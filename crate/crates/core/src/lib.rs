//! Bayesian quadrature for integrals `p(f) = ∫ f(x) p(dx)` where `p` is known
//! only through the samples at which `f` was evaluated.
//!
//! The integrand gets a Gaussian-process prior with a Gaussian kernel, the
//! unknown distribution gets a Dirichlet-process mixture of Gaussians, and the
//! two are tied together by closed-form kernel means. The result is a set of
//! posterior draws of the integral that accounts both for not knowing `f`
//! away from the samples and for not knowing `p`.
//!
//! Module map:
//!
//! * [`bq`]: Gram matrices, jittered Cholesky solves and the closed-form
//!   quadrature posterior for a fixed kernel mean.
//! * [`dp`]: normal-inverse-gamma conjugacy, the Gibbs sampler over latent
//!   component parameters and truncated stick-breaking.
//! * [`conjugate`]: kernel means and initial errors of a Gaussian kernel
//!   against a Gaussian mixture.
//! * [`sampler`]: the outer sampler producing [`IntegralPosterior`] draws.
//! * [`testbed`]: polynomial × Gaussian-mixture tasks with exact integrals and
//!   the Student-t Monte Carlo interval baseline.
//! * [`metrics`]: Wasserstein-to-truth, credible intervals, coverage and
//!   log-log slope fits.
//! * [`experiment`]: coverage and convergence study drivers.

pub mod bq;
pub mod conjugate;
pub mod dp;
mod error;
pub mod experiment;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod testbed;

pub use bq::{
    bq_posterior, gram_matrix, regularized_solve, GaussianKernel, NormalPosterior, SampleSet,
};
pub use conjugate::{initial_error, kernel_mean_point, kernel_mean_vector};
pub use dp::{Atom, DpConfig, LatentState, MixtureRealisation, NigParams};
pub use error::{Error, Result};
pub use sampler::{HyperParams, HyperPriors, IntegralPosterior, SamplerConfig};
