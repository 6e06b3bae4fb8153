//! Dirichlet-process mixture of axis-aligned Gaussians with a conjugate
//! normal-inverse-gamma base measure.
//!
//! Each sample `xᵢ` carries a latent atom `φᵢ = (mean, variance)` (one pair
//! per dimension). The Gibbs conditional of `φᵢ` given the others mixes a
//! fresh draw from the per-point NIG posterior `Qᵢ` with copies of the other
//! atoms; [`stick_breaking_draw`] then turns a latent state into one
//! truncated realisation of the mixing distribution.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bq::SampleSet;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Normal-inverse-gamma parameters `(μ₀, λ₀, α₀, β₀)`:
/// `variance ~ IG(α₀, β₀)`, `mean | variance ~ N(μ₀, variance / λ₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigParams {
    pub location: f64,
    pub precision_scale: f64,
    pub shape: f64,
    pub rate: f64,
}

impl Default for NigParams {
    /// `μ₀ = 0, λ₀ = α₀ = β₀ = 1`.
    fn default() -> Self {
        Self {
            location: 0.0,
            precision_scale: 1.0,
            shape: 1.0,
            rate: 1.0,
        }
    }
}

impl NigParams {
    pub fn new(location: f64, precision_scale: f64, shape: f64, rate: f64) -> Result<Self> {
        let p = Self {
            location,
            precision_scale,
            shape,
            rate,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.location.is_finite() {
            return Err(Error::invalid("NIG location must be finite"));
        }
        for (name, v) in [
            ("precision scale", self.precision_scale),
            ("shape", self.shape),
            ("rate", self.rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "NIG {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Conjugate update after observing a single scalar `x ~ N(mean, variance)`.
    pub fn posterior(&self, x: f64) -> Result<NigParams> {
        let precision_scale = self.precision_scale + 1.0;
        let location = (self.precision_scale * self.location + x) / precision_scale;
        let shape = self.shape + 0.5;
        let rate = self.rate
            + 0.5
                * (self.precision_scale * self.location * self.location + x * x
                    - precision_scale * location * location);
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::numerical(format!(
                "NIG update produced non-positive rate {rate}"
            )));
        }
        Ok(NigParams {
            location,
            precision_scale,
            shape,
            rate,
        })
    }

    /// Log marginal density of one scalar observation (the Student-t predictive).
    pub fn ln_predictive(&self, x: f64) -> f64 {
        let post = match self.posterior(x) {
            Ok(p) => p,
            Err(_) => return f64::NEG_INFINITY,
        };
        -0.5 * LN_2PI
            + 0.5 * (self.precision_scale.ln() - post.precision_scale.ln())
            + self.shape * self.rate.ln()
            - post.shape * post.rate.ln()
            + ln_gamma(post.shape)
            - ln_gamma(self.shape)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        sample_nig(self, rng)
    }
}

pub fn nig_posterior_update(x: f64, prior: &NigParams) -> Result<NigParams> {
    prior.posterior(x)
}

/// Draws `(mean, variance)` from a normal-inverse-gamma distribution.
pub fn sample_nig<R: Rng + ?Sized>(params: &NigParams, rng: &mut R) -> (f64, f64) {
    let gamma = Gamma::new(params.shape, 1.0 / params.rate).expect("validated NIG parameters");
    let mut variance = 1.0 / gamma.sample(rng);
    // A gamma draw can overflow 1/x only for absurd parameters; keep the support.
    if !(variance.is_finite() && variance > 0.0) {
        variance = f64::MIN_POSITIVE.max(variance.min(f64::MAX));
    }
    let sd = (variance / params.precision_scale).sqrt();
    let mean = params.location + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
    (mean, variance)
}

/// Parameters of one axis-aligned Gaussian component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl Atom {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() || mean.is_empty() {
            return Err(Error::invalid(
                "atom mean and variance must have the same nonzero length",
            ));
        }
        if mean.iter().any(|m| !m.is_finite())
            || variance.iter().any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::invalid(
                "atom needs finite means and nonnegative variances",
            ));
        }
        Ok(Self { mean, variance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn ln_density(&self, x: &[f64]) -> f64 {
        self.ln_normalizer() + self.ln_kernel(x)
    }

    fn ln_normalizer(&self) -> f64 {
        self.variance.iter().map(|v| -0.5 * (LN_2PI + v.ln())).sum()
    }

    fn ln_kernel(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.mean)
            .zip(&self.variance)
            .map(|((x, m), v)| {
                let r = x - m;
                -0.5 * r * r / v
            })
            .sum()
    }
}

/// Latent atoms `φ₁..φₙ`, one per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    atoms: Vec<Atom>,
}

impl LatentState {
    /// Starts every atom at its own sample with unit variances.
    pub fn initial(samples: &SampleSet) -> Self {
        let atoms = samples
            .locations()
            .iter()
            .map(|x| Atom {
                mean: x.clone(),
                variance: vec![1.0; x.len()],
            })
            .collect();
        Self { atoms }
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("latent state needs at least one atom"));
        }
        let d = atoms[0].dim();
        if atoms
            .iter()
            .any(|a| a.dim() != d || a.variance.iter().any(|v| *v <= 0.0))
        {
            return Err(Error::invalid(
                "latent atoms need a common dimension and positive variances",
            ));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Number of distinct atoms, i.e. occupied mixture components.
    pub fn cluster_count(&self) -> usize {
        let mut seen: Vec<&Atom> = Vec::new();
        for a in &self.atoms {
            if !seen.contains(&a) {
                seen.push(a);
            }
        }
        seen.len()
    }

    fn check(&self, samples: &SampleSet) -> Result<()> {
        if self.atoms.len() != samples.len() {
            return Err(Error::invalid(format!(
                "latent state has {} atoms but there are {} samples",
                self.atoms.len(),
                samples.len()
            )));
        }
        if self.atoms[0].dim() != samples.dim() {
            return Err(Error::invalid(
                "latent state and samples disagree on dimension",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub concentration: f64,
    /// Shared by every dimension.
    pub base: NigParams,
    pub truncation: usize,
    pub gibbs_sweeps: usize,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            concentration: 1.0,
            base: NigParams::default(),
            truncation: 500,
            gibbs_sweeps: 100,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return Err(Error::invalid(format!(
                "concentration must be positive, got {}",
                self.concentration
            )));
        }
        if self.truncation == 0 {
            return Err(Error::invalid("truncation must be at least 1"));
        }
        if self.gibbs_sweeps == 0 {
            return Err(Error::invalid("gibbs_sweeps must be at least 1"));
        }
        self.base.validate()
    }
}

/// `ln ω₀`: log of `α` times the base-measure marginal density of `x`.
pub fn ln_base_marginal_weight(x: &[f64], base: &NigParams, concentration: f64) -> f64 {
    concentration.ln() + x.iter().map(|&xk| base.ln_predictive(xk)).sum::<f64>()
}

pub fn base_marginal_weight(x: &[f64], base: &NigParams, concentration: f64) -> f64 {
    ln_base_marginal_weight(x, base, concentration).exp()
}

/// Which branch a Gibbs update takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Fresh draw from the per-point NIG posterior.
    Base,
    /// Copy of another point's atom.
    Copy(usize),
}

/// Normalized conditional distribution of one latent atom.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsConditional {
    /// Probability of drawing a fresh atom from `posterior`.
    pub base_weight: f64,
    /// Probability of copying atom `j`; entry `i` (the updated point) is zero.
    pub copy_weights: Vec<f64>,
    /// Per-dimension NIG posterior given `xᵢ`.
    pub posterior: Vec<NigParams>,
}

impl GibbsConditional {
    pub fn probability(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Base => self.base_weight,
            Branch::Copy(j) => self.copy_weights[j],
        }
    }

    pub fn sample_branch<R: Rng + ?Sized>(&self, rng: &mut R) -> Branch {
        pick_branch(self.base_weight, &self.copy_weights, rng.random::<f64>())
    }
}

fn pick_branch(base_weight: f64, copy_weights: &[f64], u: f64) -> Branch {
    let mut acc = base_weight;
    if u < acc {
        return Branch::Base;
    }
    let mut last = None;
    for (j, w) in copy_weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last = Some(j);
            if u < acc {
                return Branch::Copy(j);
            }
        }
    }
    // u landed in the round-off gap at the top of the cumulative sum.
    last.map_or(Branch::Base, Branch::Copy)
}

/// Fills `ln_w` with unnormalized log weights (`ln_w[i] = -∞`) and returns the base log weight.
fn conditional_log_weights(
    i: usize,
    atoms: &[Atom],
    ln_norms: &[f64],
    x: &[f64],
    config: &DpConfig,
    ln_w: &mut [f64],
) -> f64 {
    for (j, (atom, ln_norm)) in atoms.iter().zip(ln_norms).enumerate() {
        ln_w[j] = if j == i {
            f64::NEG_INFINITY
        } else {
            ln_norm + atom.ln_kernel(x)
        };
    }
    ln_base_marginal_weight(x, &config.base, config.concentration)
}

/// Exponentiates with max-subtraction and normalizes in place; returns the normalized base weight.
fn normalize(ln_base: f64, ln_w: &mut [f64]) -> f64 {
    let max = ln_w.iter().copied().fold(ln_base, f64::max);
    let base = (ln_base - max).exp();
    let mut total = base;
    for w in ln_w.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in ln_w.iter_mut() {
        *w /= total;
    }
    base / total
}

pub fn gibbs_conditional(
    i: usize,
    state: &LatentState,
    samples: &SampleSet,
    config: &DpConfig,
) -> Result<GibbsConditional> {
    state.check(samples)?;
    if i >= samples.len() {
        return Err(Error::invalid(format!(
            "index {i} out of range for {} samples",
            samples.len()
        )));
    }
    let x = &samples.locations()[i];
    let ln_norms: Vec<f64> = state.atoms.iter().map(Atom::ln_normalizer).collect();
    let mut copy_weights = vec![0.0; state.len()];
    let ln_base = conditional_log_weights(i, &state.atoms, &ln_norms, x, config, &mut copy_weights);
    let base_weight = normalize(ln_base, &mut copy_weights);
    let posterior = x
        .iter()
        .map(|&xk| config.base.posterior(xk))
        .collect::<Result<Vec<_>>>()?;
    Ok(GibbsConditional {
        base_weight,
        copy_weights,
        posterior,
    })
}

/// Occupied value of the latent atoms with its multiplicity.
struct Cluster {
    atom: Atom,
    ln_norm: f64,
    count: usize,
}

/// One systematic-scan Gibbs sweep over `i = 0..n`.
///
/// Points sharing a bit-identical atom are grouped, so copying "one of the
/// `c` points holding atom φ" has weight `c · N(xᵢ; φ)`. This is the same
/// conditional as [`gibbs_conditional`] at `O(n · clusters)` per sweep.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: LatentState,
    samples: &SampleSet,
    config: &DpConfig,
    rng: &mut R,
) -> Result<LatentState> {
    state.check(samples)?;
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut labels = Vec::with_capacity(state.len());
    for atom in state.atoms {
        match clusters.iter().position(|c| c.atom == atom) {
            Some(k) => {
                clusters[k].count += 1;
                labels.push(k);
            }
            None => {
                labels.push(clusters.len());
                clusters.push(Cluster {
                    ln_norm: atom.ln_normalizer(),
                    atom,
                    count: 1,
                });
            }
        }
    }

    let mut weights: Vec<f64> = Vec::new();
    for (i, x) in samples.locations().iter().enumerate() {
        clusters[labels[i]].count -= 1;
        weights.clear();
        weights.extend(clusters.iter().map(|c| {
            if c.count == 0 {
                f64::NEG_INFINITY
            } else {
                (c.count as f64).ln() + c.ln_norm + c.atom.ln_kernel(x)
            }
        }));
        let ln_base = ln_base_marginal_weight(x, &config.base, config.concentration);
        let base_weight = normalize(ln_base, &mut weights);
        labels[i] = match pick_branch(base_weight, &weights, rng.random::<f64>()) {
            Branch::Base => {
                let mut atom = Atom {
                    mean: Vec::with_capacity(x.len()),
                    variance: Vec::with_capacity(x.len()),
                };
                for &xk in x {
                    let (m, v) = sample_nig(&config.base.posterior(xk)?, rng);
                    atom.mean.push(m);
                    atom.variance.push(v);
                }
                let cluster = Cluster {
                    ln_norm: atom.ln_normalizer(),
                    atom,
                    count: 1,
                };
                match clusters.iter().position(|c| c.count == 0) {
                    Some(k) => {
                        clusters[k] = cluster;
                        k
                    }
                    None => {
                        clusters.push(cluster);
                        clusters.len() - 1
                    }
                }
            }
            Branch::Copy(k) => {
                clusters[k].count += 1;
                k
            }
        };
    }
    let atoms = labels.iter().map(|&k| clusters[k].atom.clone()).collect();
    Ok(LatentState { atoms })
}

/// Runs `sweeps` Gibbs sweeps.
pub fn run_gibbs<R: Rng + ?Sized>(
    mut state: LatentState,
    samples: &SampleSet,
    config: &DpConfig,
    sweeps: usize,
    rng: &mut R,
) -> Result<LatentState> {
    for _ in 0..sweeps {
        state = gibbs_sweep(state, samples, config, rng)?;
    }
    Ok(state)
}

/// One truncated draw `Σ_j w_j N(·; φ_j)` of the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRealisation {
    weights: Vec<f64>,
    components: Vec<Atom>,
}

impl MixtureRealisation {
    pub fn new(weights: Vec<f64>, components: Vec<Atom>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::invalid(
                "mixture needs one weight per component and at least one component",
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(
                "mixture weights must be finite and nonnegative",
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::invalid("mixture components must share a dimension"));
        }
        Ok(Self {
            weights,
            components,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Atom] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Merges bit-identical components by summing their weights; the
    /// represented distribution is unchanged. Order of first appearance is kept.
    pub fn compacted(&self) -> MixtureRealisation {
        let mut weights: Vec<f64> = Vec::new();
        let mut components: Vec<Atom> = Vec::new();
        // Stick-breaking copies share latent atoms, so the distinct set is small.
        for (w, c) in self.weights.iter().zip(&self.components) {
            match components.iter().position(|seen| seen == c) {
                Some(k) => weights[k] += w,
                None => {
                    weights.push(*w);
                    components.push(c.clone());
                }
            }
        }
        MixtureRealisation {
            weights,
            components,
        }
    }
}

/// Stick lengths `w_j = β_j ∏_{j'<j} (1 − β_{j'})` for the given breaks.
pub fn stick_weights(betas: &[f64]) -> Vec<f64> {
    let mut remaining = 1.0;
    betas
        .iter()
        .map(|b| {
            let w = b * remaining;
            remaining *= 1.0 - b;
            w
        })
        .collect()
}

/// Truncated stick-breaking draw from the DP posterior given the latent atoms.
///
/// The first `N − 1` breaks are `Beta(1, α + n)`, the last is 1 so the
/// weights form a proper distribution. Each atom is a fresh base draw with
/// probability `α / (α + n)`, otherwise a uniformly chosen latent atom.
pub fn stick_breaking_draw<R: Rng + ?Sized>(
    state: &LatentState,
    config: &DpConfig,
    rng: &mut R,
) -> Result<MixtureRealisation> {
    config.validate()?;
    if state.is_empty() {
        return Err(Error::invalid(
            "stick-breaking needs a non-empty latent state",
        ));
    }
    let n = state.len() as f64;
    let a = config.concentration + n;
    let beta =
        Beta::new(1.0, a).map_err(|e| Error::invalid(format!("bad Beta parameters: {e}")))?;
    let mut betas: Vec<f64> = (0..config.truncation - 1)
        .map(|_| beta.sample(rng))
        .collect();
    betas.push(1.0);
    let weights = stick_weights(&betas);

    let fresh = config.concentration / a;
    let d = state.atoms[0].dim();
    let components = (0..config.truncation)
        .map(|_| {
            if rng.random::<f64>() < fresh {
                let mut atom = Atom {
                    mean: Vec::with_capacity(d),
                    variance: Vec::with_capacity(d),
                };
                for _ in 0..d {
                    let (m, v) = sample_nig(&config.base, rng);
                    atom.mean.push(m);
                    atom.variance.push(v);
                }
                atom
            } else {
                state.atoms[rng.random_range(0..state.len())].clone()
            }
        })
        .collect();
    Ok(MixtureRealisation {
        weights,
        components,
    })
}
