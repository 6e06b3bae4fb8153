//! Closed-form kernel means and initial errors of the Gaussian kernel against
//! a Gaussian mixture.
//!
//! Convolving a unit Gaussian kernel of lengthscale `λ` with `N(m, v)` gives
//! `λ / √(λ² + v) · exp(−(x − m)² / (2(λ² + v)))`, and integrating once more
//! against `N(m', v')` adds `v'` to the denominator. In several dimensions the
//! kernel and the components factorize, so each term is a product over
//! dimensions with the amplitude `ζ` applied once.

use crate::bq::GaussianKernel;
use crate::dp::{Atom, MixtureRealisation};
use crate::error::{Error, Result};

fn check_dims(kernel: &GaussianKernel, mixture: &MixtureRealisation) -> Result<()> {
    if kernel.dim() != mixture.dim() {
        return Err(Error::invalid(format!(
            "kernel has {} dimensions but the mixture has {}",
            kernel.dim(),
            mixture.dim()
        )));
    }
    Ok(())
}

/// Unit-amplitude `∫ k(x, x') N(x'; atom) dx'`, or with `extra_var` the
/// second-stage convolution used by the initial error.
#[inline]
fn smoothed_kernel(x: &[f64], atom: &Atom, extra_var: Option<&[f64]>, lengthscales: &[f64]) -> f64 {
    let mut scale = 1.0;
    let mut exponent = 0.0;
    for d in 0..lengthscales.len() {
        let l2 = lengthscales[d] * lengthscales[d];
        let total = l2 + atom.variance[d] + extra_var.map_or(0.0, |v| v[d]);
        scale *= (l2 / total).sqrt();
        let r = x[d] - atom.mean[d];
        exponent += r * r / total;
    }
    scale * (-0.5 * exponent).exp()
}

/// Kernel mean `μ(x) = ∫ k(x, x') p(dx')` for the mixture `p`.
pub fn kernel_mean_point(
    x: &[f64],
    mixture: &MixtureRealisation,
    kernel: &GaussianKernel,
) -> Result<f64> {
    check_dims(kernel, mixture)?;
    if x.len() != kernel.dim() {
        return Err(Error::invalid(format!(
            "point has {} dimensions, kernel has {}",
            x.len(),
            kernel.dim()
        )));
    }
    let ls = kernel.lengthscales();
    let sum: f64 = mixture
        .weights()
        .iter()
        .zip(mixture.components())
        .map(|(w, atom)| w * smoothed_kernel(x, atom, None, ls))
        .sum();
    Ok(kernel.amplitude() * sum)
}

pub fn kernel_mean_vector(
    locations: &[Vec<f64>],
    mixture: &MixtureRealisation,
    kernel: &GaussianKernel,
) -> Result<Vec<f64>> {
    locations
        .iter()
        .map(|x| kernel_mean_point(x, mixture, kernel))
        .collect()
}

/// Initial error `p⊗p(k) = ∬ k(x, x') p(dx) p(dx')`, summed directly over
/// all component pairs (diagonal once, off-diagonal pairs twice).
pub fn initial_error(mixture: &MixtureRealisation, kernel: &GaussianKernel) -> Result<f64> {
    check_dims(kernel, mixture)?;
    let ls = kernel.lengthscales();
    let w = mixture.weights();
    let comps = mixture.components();
    let mut diag = 0.0;
    let mut off = 0.0;
    for j in 0..comps.len() {
        if w[j] == 0.0 {
            continue;
        }
        diag +=
            w[j] * w[j] * smoothed_kernel(&comps[j].mean, &comps[j], Some(&comps[j].variance), ls);
        let mut row = 0.0;
        for jp in 0..j {
            if w[jp] == 0.0 {
                continue;
            }
            row +=
                w[jp] * smoothed_kernel(&comps[j].mean, &comps[jp], Some(&comps[j].variance), ls);
        }
        off += w[j] * row;
    }
    Ok(kernel.amplitude() * (diag + 2.0 * off))
}
