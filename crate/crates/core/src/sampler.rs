//! The outer sampler for the posterior over `p(f)`.
//!
//! Each outer draw is independent:
//!
//! 1. draw hyper-parameters (lengthscales, concentration) from their priors;
//! 2. start a Gibbs chain at `φᵢ = (xᵢ, 1)` and run it for the burn-in plus
//!    the between-draw sweeps;
//! 3. stick-break a truncated mixture realisation from the chain state;
//! 4. compute the kernel mean and initial error under that realisation and
//!    draw once from the resulting normal quadrature posterior.
//!
//! Draw `k` consumes only the substream `(seed, k)`, so results do not depend
//! on how draws are spread over threads.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bq::{
    bq_posterior_factored, gram_matrix, GaussianKernel, JitteredCholesky, NormalPosterior,
    SampleSet,
};
use crate::conjugate::{initial_error, kernel_mean_vector};
use crate::dp::{
    run_gibbs, stick_breaking_draw, DpConfig, LatentState, MixtureRealisation, NigParams,
};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Largest fraction of outer draws allowed to fail numerically before the run fails.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub kernel: GaussianKernel,
    pub concentration: f64,
    pub base: NigParams,
}

/// Priors over the hyper-parameters: `λ_d ~ Gamma(shape, rate)` per
/// dimension, `α ~ Exp(rate)`, with amplitude and base measure fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPriors {
    pub lengthscale_shape: f64,
    pub lengthscale_rate: f64,
    pub concentration_rate: f64,
    pub amplitude: f64,
    pub base: NigParams,
}

impl Default for HyperPriors {
    fn default() -> Self {
        Self {
            lengthscale_shape: 2.0,
            lengthscale_rate: 1.0,
            concentration_rate: 1.0,
            amplitude: 1.0,
            base: NigParams::default(),
        }
    }
}

impl HyperPriors {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lengthscale shape", self.lengthscale_shape),
            ("lengthscale rate", self.lengthscale_rate),
            ("concentration rate", self.concentration_rate),
            ("amplitude", self.amplitude),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "hyper-prior {name} must be positive, got {v}"
                )));
            }
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub outer_draws: usize,
    pub truncation: usize,
    pub burn_in_sweeps: usize,
    pub between_sweeps: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            outer_draws: 500,
            truncation: 500,
            burn_in_sweeps: 100,
            between_sweeps: 1,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_draws == 0 {
            return Err(Error::invalid("outer_draws must be at least 1"));
        }
        if self.truncation == 0 {
            return Err(Error::invalid("truncation must be at least 1"));
        }
        if self.burn_in_sweeps == 0 || self.between_sweeps == 0 {
            return Err(Error::invalid(
                "burn-in and between-draw sweeps must be at least 1",
            ));
        }
        Ok(())
    }

    fn dp_config(&self, hp: &HyperParams) -> DpConfig {
        DpConfig {
            concentration: hp.concentration,
            base: hp.base,
            truncation: self.truncation,
            gibbs_sweeps: self.burn_in_sweeps,
        }
    }
}

/// Posterior draws of the integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralPosterior {
    pub draws: Vec<f64>,
    /// Outer draws dropped after a numerical failure.
    pub failures: usize,
}

impl IntegralPosterior {
    pub fn mean(&self) -> f64 {
        self.draws.iter().sum::<f64>() / self.draws.len() as f64
    }

    /// Sample standard deviation (`n − 1` denominator); zero for a single draw.
    pub fn sd(&self) -> f64 {
        let n = self.draws.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.draws.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

pub fn sample_hyperparameters<R: Rng + ?Sized>(
    priors: &HyperPriors,
    dim: usize,
    rng: &mut R,
) -> Result<HyperParams> {
    priors.validate()?;
    let gamma = Gamma::new(priors.lengthscale_shape, 1.0 / priors.lengthscale_rate)
        .map_err(|e| Error::invalid(format!("lengthscale prior: {e}")))?;
    let exp = Exp::new(priors.concentration_rate)
        .map_err(|e| Error::invalid(format!("concentration prior: {e}")))?;
    let lengthscales: Vec<f64> = (0..dim)
        .map(|_| gamma.sample(rng).max(f64::MIN_POSITIVE))
        .collect();
    let concentration = exp.sample(rng).max(f64::MIN_POSITIVE);
    Ok(HyperParams {
        kernel: GaussianKernel::new(priors.amplitude, lengthscales)?,
        concentration,
        base: priors.base,
    })
}

/// Quadrature posterior for a fixed kernel and a fixed mixture.
pub fn bq_posterior_for_mixture(
    samples: &SampleSet,
    kernel: &GaussianKernel,
    mixture: &MixtureRealisation,
) -> Result<NormalPosterior> {
    let mixture = mixture.compacted();
    let mu = kernel_mean_vector(samples.locations(), &mixture, kernel)?;
    let e0 = initial_error(&mixture, kernel)?;
    let chol = JitteredCholesky::new(&gram_matrix(kernel, samples.locations())?)?;
    bq_posterior_factored(&chol, samples.values(), &mu, e0)
}

/// One draw from the normal quadrature posterior given a fixed mixture.
pub fn bq_draw<R: Rng + ?Sized>(
    samples: &SampleSet,
    kernel: &GaussianKernel,
    mixture: &MixtureRealisation,
    rng: &mut R,
) -> Result<f64> {
    let post = bq_posterior_for_mixture(samples, kernel, mixture)?;
    Ok(draw_normal(&post, rng))
}

/// `mean + sd·z`; a zero-variance posterior returns its mean exactly.
pub fn draw_normal<R: Rng + ?Sized>(post: &NormalPosterior, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    if post.variance == 0.0 {
        post.mean
    } else {
        post.mean + post.sd() * z
    }
}

/// Advances a burned-in chain, stick-breaks a mixture and draws `p(f)` once.
pub fn draw_integral_once<R: Rng + ?Sized>(
    samples: &SampleSet,
    hp: &HyperParams,
    gibbs_state: &mut LatentState,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<f64> {
    let dp = config.dp_config(hp);
    let state = std::mem::replace(gibbs_state, LatentState::initial(samples));
    *gibbs_state = run_gibbs(state, samples, &dp, config.between_sweeps, rng)?;
    let mixture = stick_breaking_draw(gibbs_state, &dp, rng)?;
    bq_draw(samples, &hp.kernel, &mixture, rng)
}

/// Outer draw `index` of [`sample_integral_posterior`].
pub fn outer_draw(
    samples: &SampleSet,
    priors: &HyperPriors,
    config: &SamplerConfig,
    index: u64,
) -> Result<f64> {
    let mut rng = substream(config.seed, &[index]);
    let hp = sample_hyperparameters(priors, samples.dim(), &mut rng)?;
    let dp = config.dp_config(&hp);
    let mut state = run_gibbs(
        LatentState::initial(samples),
        samples,
        &dp,
        config.burn_in_sweeps,
        &mut rng,
    )?;
    draw_integral_once(samples, &hp, &mut state, config, &mut rng)
}

fn collect_draws(results: Vec<Result<f64>>) -> Result<IntegralPosterior> {
    let total = results.len();
    let mut draws = Vec::with_capacity(total);
    let mut first_error = None;
    for r in results {
        match r {
            Ok(v) if v.is_finite() => draws.push(v),
            Ok(v) => {
                first_error.get_or_insert_with(|| Error::numerical(format!("non-finite draw {v}")));
            }
            Err(e @ Error::InvalidInput(_)) => return Err(e),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let failures = total - draws.len();
    if failures as f64 > MAX_FAILURE_FRACTION * total as f64 {
        let cause = first_error.map(|e| e.to_string()).unwrap_or_default();
        return Err(Error::numerical(format!(
            "{failures} of {total} outer draws failed; first: {cause}"
        )));
    }
    Ok(IntegralPosterior { draws, failures })
}

pub fn sample_integral_posterior(
    samples: &SampleSet,
    priors: &HyperPriors,
    config: &SamplerConfig,
) -> Result<IntegralPosterior> {
    priors.validate()?;
    config.validate()?;
    let results: Vec<Result<f64>> = (0..config.outer_draws as u64)
        .into_par_iter()
        .map(|k| outer_draw(samples, priors, config, k))
        .collect();
    collect_draws(results)
}

/// Same scheme with the distribution known: hyper-parameters are still drawn
/// from their priors, but the mixture is fixed instead of inferred.
pub fn sample_known_distribution_posterior(
    samples: &SampleSet,
    mixture: &MixtureRealisation,
    priors: &HyperPriors,
    config: &SamplerConfig,
) -> Result<IntegralPosterior> {
    priors.validate()?;
    config.validate()?;
    let results: Vec<Result<f64>> = (0..config.outer_draws as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(config.seed, &[k]);
            let hp = sample_hyperparameters(priors, samples.dim(), &mut rng)?;
            bq_draw(samples, &hp.kernel, mixture, &mut rng)
        })
        .collect();
    collect_draws(results)
}

/// Affine map putting integrand values at sample mean 0 and sample sd 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub center: f64,
    pub scale: f64,
}

impl Standardization {
    /// Fits to `values`; a constant (or single) vector keeps scale 1.
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let center = values.iter().sum::<f64>() / n;
        let scale = if values.len() > 1 {
            (values
                .iter()
                .map(|v| (v - center) * (v - center))
                .sum::<f64>()
                / (n - 1.0))
                .sqrt()
        } else {
            0.0
        };
        Self {
            center,
            scale: if scale > 0.0 { scale } else { 1.0 },
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }

    pub fn inverse(&self, v: f64) -> f64 {
        self.center + self.scale * v
    }
}

/// Runs the sampler on standardized integrand values and maps the draws back.
/// Integration is linear, so `p(a f + b) = a p(f) + b` holds draw by draw.
pub fn sample_integral_posterior_standardized(
    samples: &SampleSet,
    priors: &HyperPriors,
    config: &SamplerConfig,
) -> Result<(IntegralPosterior, Standardization)> {
    let st = Standardization::fit(samples.values());
    let scaled = samples.with_values(samples.values().iter().map(|v| st.forward(*v)).collect())?;
    let mut post = sample_integral_posterior(&scaled, priors, config)?;
    for d in &mut post.draws {
        *d = st.inverse(*d);
    }
    Ok((post, st))
}
