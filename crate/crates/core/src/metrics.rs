//! Evaluation metrics for posterior draws of an integral.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::testbed::student_t_quantile;

/// 1-Wasserstein distance between the empirical posterior and a point mass at `truth`.
pub fn wasserstein_to_point(draws: &[f64], truth: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::invalid("no posterior draws"));
    }
    Ok(draws.iter().map(|d| (d - truth).abs()).sum::<f64>() / draws.len() as f64)
}

/// Empirical quantile with linear interpolation at rank `h = (n − 1)p + 1`.
/// `sorted` must be in ascending order.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Central interval between the `(1 − level)/2` and `(1 + level)/2` quantiles.
pub fn central_credible_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(Error::invalid("no posterior draws"));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::invalid(format!(
            "level must lie in [0, 1], got {level}"
        )));
    }
    if draws.iter().any(|d| d.is_nan()) {
        return Err(Error::invalid("posterior draws contain NaN"));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((
        quantile_sorted(&sorted, (1.0 - level) / 2.0),
        quantile_sorted(&sorted, (1.0 + level) / 2.0),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub rate: f64,
    pub std_error: f64,
    pub trials: usize,
}

pub fn coverage_frequency(covered: &[bool]) -> Result<Coverage> {
    if covered.is_empty() {
        return Err(Error::invalid("coverage needs at least one trial"));
    }
    let trials = covered.len();
    let rate = covered.iter().filter(|c| **c).count() as f64 / trials as f64;
    Ok(Coverage {
        rate,
        std_error: (rate * (1.0 - rate) / trials as f64).sqrt(),
        trials,
    })
}

/// Least-squares line through `(ln n, ln W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; `NaN` with only two points.
    pub slope_se: f64,
    pub points: usize,
}

impl LogLogFit {
    /// Two-sided confidence interval for the slope from the t distribution with `points − 2` dof.
    pub fn slope_interval(&self, level: f64) -> Result<(f64, f64)> {
        if self.points < 3 {
            return Err(Error::invalid("slope interval needs at least three points"));
        }
        let t = student_t_quantile((1.0 + level) / 2.0, (self.points - 2) as f64)?;
        Ok((
            self.slope - t * self.slope_se,
            self.slope + t * self.slope_se,
        ))
    }
}

pub fn fit_loglog_slope(ns: &[f64], ws: &[f64]) -> Result<LogLogFit> {
    if ns.len() != ws.len() || ns.len() < 2 {
        return Err(Error::invalid(
            "slope fit needs at least two (n, W) pairs of equal length",
        ));
    }
    if ns.iter().chain(ws).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("slope fit needs positive finite values"));
    }
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = ws.iter().map(|w| w.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs at least two distinct n"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if xs.len() > 2 {
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (m - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(LogLogFit {
        slope,
        intercept,
        slope_se,
        points: xs.len(),
    })
}
