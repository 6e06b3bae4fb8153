//! Coverage and convergence studies on test-bed tasks.
//!
//! Seeding: the data set for trial `t` at sample size `n` comes from the
//! substream `(seed, n, t)`, shared by every method so that DPMBQ and the
//! t-interval see identical samples. The sampler for that trial runs with
//! seed `derive_seed(seed, [n, t, 1])`, and its outer draw `k` then uses
//! `(that seed, k)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bq::SampleSet;
use crate::error::{Error, Result};
use crate::metrics::{
    central_credible_interval, coverage_frequency, fit_loglog_slope, wasserstein_to_point,
    LogLogFit,
};
use crate::rng::{derive_seed, substream};
use crate::sampler::{sample_integral_posterior, HyperPriors, SamplerConfig};
use crate::testbed::{mc_t_interval, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dpmbq")]
    Dpmbq,
    #[serde(rename = "t-interval")]
    TInterval,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Dpmbq => "dpmbq",
            Method::TInterval => "t-interval",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings shared by the study drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub seed: u64,
    pub priors: HyperPriors,
    /// Sampler settings; its `seed` is replaced per trial.
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub method: Method,
    pub n: usize,
    pub trials: usize,
    pub rate: f64,
    pub se: f64,
}

/// Samples and integrand values for one trial.
pub fn trial_samples(task: &Task, n: usize, seed: u64, trial: usize) -> Result<SampleSet> {
    let mut rng = substream(seed, &[n as u64, trial as u64]);
    let (xs, fs) = task.sample(n, &mut rng)?;
    SampleSet::from_scalars(&xs, fs)
}

fn trial_sampler(config: &StudyConfig, n: usize, trial: usize) -> SamplerConfig {
    SamplerConfig {
        seed: derive_seed(config.seed, &[n as u64, trial as u64, 1]),
        ..config.sampler.clone()
    }
}

/// Posterior draws of DPMBQ for one trial.
pub fn dpmbq_trial(task: &Task, n: usize, trial: usize, config: &StudyConfig) -> Result<Vec<f64>> {
    let samples = trial_samples(task, n, config.seed, trial)?;
    Ok(
        sample_integral_posterior(&samples, &config.priors, &trial_sampler(config, n, trial))?
            .draws,
    )
}

fn contains(interval: (f64, f64), truth: f64) -> bool {
    interval.0 <= truth && truth <= interval.1
}

/// Coverage of the central credible interval (DPMBQ) or the t-interval at `level`.
pub fn coverage(
    task: &Task,
    method: Method,
    n: usize,
    trials: usize,
    level: f64,
    config: &StudyConfig,
) -> Result<CoverageRow> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if method == Method::TInterval && n < 2 {
        return Err(Error::invalid("the t-interval needs n >= 2"));
    }
    let truth = task.true_integral()?;
    let covered: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| match method {
            Method::Dpmbq => {
                let draws = dpmbq_trial(task, n, t, config)?;
                Ok(contains(central_credible_interval(&draws, level)?, truth))
            }
            Method::TInterval => {
                let samples = trial_samples(task, n, config.seed, t)?;
                Ok(contains(mc_t_interval(samples.values(), level)?, truth))
            }
        })
        .collect::<Result<_>>()?;
    let c = coverage_frequency(&covered)?;
    Ok(CoverageRow {
        method,
        n,
        trials,
        rate: c.rate,
        se: c.std_error,
    })
}

/// Runs [`coverage`] for every method and sample size, rows ordered by method then `n`.
pub fn coverage_study(
    task: &Task,
    plan: &[(Method, usize)],
    ns: &[usize],
    level: f64,
    config: &StudyConfig,
) -> Result<Vec<CoverageRow>> {
    task.validate()?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let mut rows = Vec::new();
    for &(method, trials) in plan {
        for &n in ns {
            rows.push(coverage(task, method, n, trials, level, config)?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub rep: usize,
    pub wasserstein: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub fit: LogLogFit,
}

/// Evaluates `distance(n, rep)` over the grid and fits the log-log trend.
/// `distance` is the only source of W values, so tests can inject exact power laws.
pub fn convergence_study<F>(n_grid: &[usize], reps: usize, distance: F) -> Result<ConvergenceStudy>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    if reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    if n_grid.len() < 2 || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(Error::invalid(
            "n grid must hold at least two strictly ascending positive sizes",
        ));
    }
    let cells: Vec<(usize, usize)> = n_grid
        .iter()
        .flat_map(|&n| (0..reps).map(move |r| (n, r)))
        .collect();
    let rows: Vec<ConvergenceRow> = cells
        .par_iter()
        .map(|&(n, rep)| {
            Ok(ConvergenceRow {
                n,
                rep,
                wasserstein: distance(n, rep)?,
            })
        })
        .collect::<Result<_>>()?;
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ws: Vec<f64> = rows.iter().map(|r| r.wasserstein).collect();
    let fit = fit_loglog_slope(&ns, &ws)?;
    Ok(ConvergenceStudy { rows, fit })
}

/// Wasserstein distance of the DPMBQ posterior to the true integral for one repetition.
pub fn dpmbq_wasserstein(task: &Task, n: usize, rep: usize, config: &StudyConfig) -> Result<f64> {
    let truth = task.true_integral()?;
    wasserstein_to_point(&dpmbq_trial(task, n, rep, config)?, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> StudyConfig {
        StudyConfig {
            seed: 5,
            priors: HyperPriors::default(),
            sampler: SamplerConfig {
                outer_draws: 30,
                truncation: 50,
                burn_in_sweeps: 5,
                between_sweeps: 1,
                seed: 0,
            },
        }
    }

    #[test]
    fn power_law_injection_recovers_slope() {
        let study = convergence_study(&[10, 20, 40, 80, 160], 3, |n, _| {
            Ok(2.0 * (n as f64).powf(-0.25))
        })
        .unwrap();
        assert_eq!(study.rows.len(), 15);
        assert!((study.fit.slope + 0.25).abs() < 1e-12);
    }

    #[test]
    fn convergence_grid_validation() {
        let w = |_: usize, _: usize| Ok(1.0);
        assert!(convergence_study(&[10, 20], 0, w).is_err());
        assert!(convergence_study(&[20, 10], 1, w).is_err());
        assert!(convergence_study(&[10], 1, w).is_err());
    }

    #[test]
    fn zero_trials_rejected() {
        let err = coverage(
            &Task::illustration(),
            Method::TInterval,
            5,
            0,
            0.5,
            &quick(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn methods_share_trial_data() {
        let a = trial_samples(&Task::illustration(), 8, 3, 2).unwrap();
        let b = trial_samples(&Task::illustration(), 8, 3, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, trial_samples(&Task::illustration(), 8, 3, 1).unwrap());
    }

    #[test]
    fn small_study_is_deterministic() {
        let plan = [(Method::Dpmbq, 3), (Method::TInterval, 20)];
        let a = coverage_study(&Task::illustration(), &plan, &[5, 8], 0.5, &quick()).unwrap();
        let b = coverage_study(&Task::illustration(), &plan, &[5, 8], 0.5, &quick()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a[0].method, Method::Dpmbq);
        assert_eq!(a[3].trials, 20);
    }
}
