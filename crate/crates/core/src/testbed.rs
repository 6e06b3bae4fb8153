//! Polynomial integrands against Gaussian mixtures: a task family with exact
//! integrals, plus the Student-t Monte Carlo interval used as a baseline.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use crate::dp::{Atom, MixtureRealisation};
use crate::error::{Error, Result};

/// Highest moment order accepted by [`gaussian_raw_moment`].
pub const MAX_MOMENT_ORDER: u32 = 64;

/// `Σᵢ rᵢ N(cᵢ, sᵢ²)` in one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl GaussianMixtureSpec {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let spec = Self {
            weights,
            means,
            sds,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn standard_normal() -> Self {
        Self {
            weights: vec![1.0],
            means: vec![0.0],
            sds: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.weights.len();
        if m == 0 || self.means.len() != m || self.sds.len() != m {
            return Err(Error::invalid(
                "mixture needs equal, nonzero numbers of weights, means and sds",
            ));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be nonnegative"));
        }
        if self.means.iter().any(|c| !c.is_finite())
            || self.sds.iter().any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return Err(Error::invalid(
                "mixture needs finite means and nonnegative sds",
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    /// The same distribution as a one-dimensional [`MixtureRealisation`].
    pub fn to_realisation(&self) -> Result<MixtureRealisation> {
        let comps = self
            .means
            .iter()
            .zip(&self.sds)
            .map(|(c, s)| Atom::new(vec![*c], vec![s * s]))
            .collect::<Result<Vec<_>>>()?;
        MixtureRealisation::new(self.weights.clone(), comps)
    }

    /// Weights ~ Dirichlet(2, …, 2), means ~ N(0, 1), sds ~ Exp(1).
    pub fn random<R: Rng + ?Sized>(components: usize, rng: &mut R) -> Result<Self> {
        if components == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let gamma = Gamma::new(2.0, 1.0).expect("valid gamma");
        let raw: Vec<f64> = (0..components).map(|_| gamma.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|g| g / total).collect();
        let means = (0..components)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let sds = (0..components).map(|_| rng.sample(Exp1)).collect();
        Ok(Self {
            weights,
            means,
            sds,
        })
    }
}

/// `Σ_t a_t x^{b_t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSpec {
    pub coefficients: Vec<f64>,
    pub exponents: Vec<u32>,
}

impl PolynomialSpec {
    pub fn new(coefficients: Vec<f64>, exponents: Vec<u32>) -> Result<Self> {
        let spec = Self {
            coefficients,
            exponents,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients.len() != self.exponents.len() {
            return Err(Error::invalid(
                "polynomial needs one exponent per coefficient",
            ));
        }
        if self.coefficients.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("polynomial coefficients must be finite"));
        }
        let mut sorted = self.exponents.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("polynomial exponents must be distinct"));
        }
        if let Some(b) = sorted.last().filter(|b| **b > MAX_MOMENT_ORDER) {
            return Err(Error::invalid(format!(
                "polynomial degree {b} exceeds {MAX_MOMENT_ORDER}"
            )));
        }
        Ok(())
    }

    /// Dense polynomial of the given degree with N(0, 1) coefficients.
    pub fn random<R: Rng + ?Sized>(degree: u32, rng: &mut R) -> Self {
        Self {
            coefficients: (0..=degree).map(|_| rng.sample(StandardNormal)).collect(),
            exponents: (0..=degree).collect(),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        // Horner over the dense coefficient table, skipping absent powers.
        let degree = self.exponents.iter().copied().max().unwrap_or(0) as usize;
        let mut dense = vec![0.0; degree + 1];
        for (a, b) in self.coefficients.iter().zip(&self.exponents) {
            dense[*b as usize] += a;
        }
        dense.iter().rev().fold(0.0, |acc, a| acc * x + a)
    }
}

/// An integration task: integrand and true distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub mixture: GaussianMixtureSpec,
    pub polynomial: PolynomialSpec,
}

impl Task {
    pub fn validate(&self) -> Result<()> {
        self.mixture.validate()?;
        self.polynomial.validate()
    }

    /// `f(x) = 1 + x − 0.1x³` under `N(0, 1)`; the integral is exactly 1.
    pub fn illustration() -> Self {
        Self {
            mixture: GaussianMixtureSpec::standard_normal(),
            polynomial: PolynomialSpec {
                coefficients: vec![1.0, 1.0, -0.1],
                exponents: vec![0, 1, 3],
            },
        }
    }

    /// Same integrand with 3% of the mass in a narrow bump at `x = 2`, which
    /// small samples usually miss.
    pub fn rare_event() -> Self {
        Self {
            mixture: GaussianMixtureSpec {
                weights: vec![0.97, 0.03],
                means: vec![0.0, 2.0],
                sds: vec![0.1, 0.05],
            },
            polynomial: PolynomialSpec {
                coefficients: vec![1.0, 1.0, -0.1],
                exponents: vec![0, 1, 3],
            },
        }
    }

    pub fn true_integral(&self) -> Result<f64> {
        true_integral(&self.polynomial, &self.mixture)
    }

    /// Draws `n` locations from the mixture and evaluates the integrand there.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let xs = sample_mixture(&self.mixture, n, rng)?;
        let fs = eval_polynomial(&self.polynomial, &xs);
        Ok((xs, fs))
    }
}

/// `E[xᵏ]` under `N(mean, sd²)` via `M_k = mean·M_{k−1} + (k−1)·sd²·M_{k−2}`.
pub fn gaussian_raw_moment(order: u32, mean: f64, sd: f64) -> Result<f64> {
    if order > MAX_MOMENT_ORDER {
        return Err(Error::invalid(format!(
            "moment order {order} exceeds {MAX_MOMENT_ORDER}"
        )));
    }
    let var = sd * sd;
    let (mut prev, mut cur) = (1.0, mean);
    if order == 0 {
        return Ok(1.0);
    }
    for k in 2..=order {
        let next = mean * cur + (k - 1) as f64 * var * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

pub fn true_integral(poly: &PolynomialSpec, mix: &GaussianMixtureSpec) -> Result<f64> {
    poly.validate()?;
    mix.validate()?;
    let mut total = 0.0;
    for ((r, c), s) in mix.weights.iter().zip(&mix.means).zip(&mix.sds) {
        let mut component = 0.0;
        for (a, b) in poly.coefficients.iter().zip(&poly.exponents) {
            component += a * gaussian_raw_moment(*b, *c, *s)?;
        }
        total += r * component;
    }
    Ok(total)
}

pub fn sample_mixture<R: Rng + ?Sized>(
    mix: &GaussianMixtureSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    mix.validate()?;
    let pick = WeightedIndex::new(&mix.weights)
        .map_err(|e| Error::invalid(format!("mixture weights: {e}")))?;
    Ok((0..n)
        .map(|_| {
            let k = pick.sample(rng);
            mix.means[k] + mix.sds[k] * rng.sample::<f64, _>(StandardNormal)
        })
        .collect())
}

pub fn eval_polynomial(poly: &PolynomialSpec, xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| poly.eval(x)).collect()
}

/// Quantile of Student's t with `dof` degrees of freedom, through the inverse
/// regularized incomplete beta function.
pub fn student_t_quantile(p: f64, dof: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || dof.is_nan() || dof <= 0.0 {
        return Err(Error::invalid(format!(
            "t quantile needs p in (0,1) and dof > 0, got p={p}, dof={dof}"
        )));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let tail = if p > 0.5 { 1.0 - p } else { p };
    // P(|T| > t) = I_{dof/(dof+t²)}(dof/2, 1/2)
    let x = inv_beta_reg(dof / 2.0, 0.5, 2.0 * tail);
    let t = (dof * (1.0 - x) / x).sqrt();
    Ok(if p > 0.5 { t } else { -t })
}

/// Symmetric Monte Carlo interval `f̄ ± t* s/√n` at the given level.
pub fn mc_t_interval(values: &[f64], level: f64) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "t interval needs at least 2 values, got {n}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (nf - 1.0)).sqrt();
    let t = student_t_quantile((1.0 + level) / 2.0, nf - 1.0)?;
    let half = t * sd / nf.sqrt();
    Ok((mean - half, mean + half))
}
