//! Gaussian-process Bayesian quadrature with a fixed kernel mean.
//!
//! With a zero-mean GP prior on `f` and covariance `k`, conditioning on
//! `f(X)` gives a normal posterior over `p(f)` with
//!
//! ```text
//! mean     = f(X)ᵀ K⁻¹ μ(X)
//! variance = p⊗p(k) − μ(X)ᵀ K⁻¹ μ(X)
//! ```
//!
//! where `K = k(X, X)` and `μ(x) = ∫ k(x, x') p(dx')`. Both quadratic forms
//! are evaluated through the whitened vectors `L⁻¹ f(X)` and `L⁻¹ μ(X)` of a
//! jittered Cholesky factor, so the subtracted term is a sum of squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Jitter levels, relative to the largest Gram diagonal entry, tried in order.
pub const JITTER_LEVELS: [f64; 7] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];
/// Negative posterior variances down to `-VARIANCE_CLAMP * initial_error` are rounded to zero.
pub const VARIANCE_CLAMP: f64 = 1e-8;

/// Squared-exponential kernel `ζ · exp(−Σ_d (x_d − x'_d)² / (2 λ_d²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    amplitude: f64,
    lengthscales: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(amplitude: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::invalid(format!(
                "kernel amplitude must be positive, got {amplitude}"
            )));
        }
        if lengthscales.is_empty() {
            return Err(Error::invalid("kernel needs at least one lengthscale"));
        }
        if let Some(bad) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::invalid(format!(
                "kernel lengthscales must be positive, got {bad}"
            )));
        }
        Ok(Self {
            amplitude,
            lengthscales,
        })
    }

    /// Unit-amplitude isotropic kernel in `dim` dimensions.
    pub fn isotropic(amplitude: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(amplitude, vec![lengthscale; dim])
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        let exponent: f64 = x
            .iter()
            .zip(y)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| {
                let r = (a - b) / l;
                r * r
            })
            .sum();
        self.amplitude * (-0.5 * exponent).exp()
    }
}

/// Evaluation locations and integrand values: everything the estimator sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    locations: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(locations: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::invalid("sample set must contain at least one point"));
        }
        if locations.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} locations but {} integrand values",
                locations.len(),
                values.len()
            )));
        }
        let dim = locations[0].len();
        if dim == 0 {
            return Err(Error::invalid("locations must have at least one dimension"));
        }
        for (i, row) in locations.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::invalid(format!(
                    "row {i} has {} columns, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a non-finite location")));
            }
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("integrand value {i} is not finite")));
        }
        Ok(Self { locations, values })
    }

    /// One-dimensional convenience constructor.
    pub fn from_scalars(xs: &[f64], values: Vec<f64>) -> Result<Self> {
        Self::new(xs.iter().map(|&x| vec![x]).collect(), values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.locations[0].len()
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same locations with different integrand values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.locations.clone(), values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPosterior {
    pub mean: f64,
    pub variance: f64,
}

impl NormalPosterior {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub fn gram_matrix(kernel: &GaussianKernel, locations: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if locations.is_empty() {
        return Err(Error::invalid("gram matrix needs at least one location"));
    }
    if let Some(row) = locations.iter().find(|r| r.len() != kernel.dim()) {
        return Err(Error::invalid(format!(
            "location has {} dimensions but the kernel has {}",
            row.len(),
            kernel.dim()
        )));
    }
    let n = locations.len();
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        gram[(i, i)] = kernel.amplitude();
        for j in 0..i {
            let k = kernel.eval(&locations[i], &locations[j]);
            gram[(i, j)] = k;
            gram[(j, i)] = k;
        }
    }
    Ok(gram)
}

/// Cholesky factor of `gram + jitter·I`, with jitter escalated until the
/// factorization succeeds.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    jitter: f64,
}

impl JitteredCholesky {
    pub fn new(gram: &DMatrix<f64>) -> Result<Self> {
        if !gram.is_square() || gram.nrows() == 0 {
            return Err(Error::invalid(format!(
                "gram matrix must be square and non-empty, got {}x{}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gram matrix has non-finite entries"));
        }
        let scale = gram.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let scale = if scale > 0.0 { scale } else { 1.0 };

        for relative in JITTER_LEVELS {
            let jitter = relative * scale;
            let mut shifted = gram.clone();
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += jitter;
            }
            if let Some(factor) = shifted.cholesky() {
                return Ok(Self { factor, jitter });
            }
        }
        let last = JITTER_LEVELS[JITTER_LEVELS.len() - 1] * scale;
        Err(Error::numerical(format!(
            "Cholesky factorization failed at maximum jitter {last:e}"
        )))
    }

    /// Absolute jitter that was added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.factor.l_dirty().nrows()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(rhs)
    }

    /// `L⁻¹ rhs`, so that `rhsᵀ (K + εI)⁻¹ rhs = ‖L⁻¹ rhs‖²`.
    pub fn whiten(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor
            .l()
            .solve_lower_triangular(rhs)
            .expect("Cholesky factor has a positive diagonal")
    }
}

/// Solves `(gram + jitter·I) s = rhs`; see [`JitteredCholesky`] for the jitter policy.
pub fn regularized_solve(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if gram.nrows() != rhs.len() {
        return Err(Error::invalid(format!(
            "gram matrix is {}x{} but rhs has length {}",
            gram.nrows(),
            gram.ncols(),
            rhs.len()
        )));
    }
    Ok(JitteredCholesky::new(gram)?.solve(rhs))
}

pub fn bq_posterior(
    samples: &SampleSet,
    kernel: &GaussianKernel,
    kernel_mean_at_x: &[f64],
    initial_error: f64,
) -> Result<NormalPosterior> {
    let gram = gram_matrix(kernel, samples.locations())?;
    let chol = JitteredCholesky::new(&gram)?;
    bq_posterior_factored(&chol, samples.values(), kernel_mean_at_x, initial_error)
}

/// [`bq_posterior`] against an already factored Gram matrix.
pub fn bq_posterior_factored(
    chol: &JitteredCholesky,
    values: &[f64],
    kernel_mean_at_x: &[f64],
    initial_error: f64,
) -> Result<NormalPosterior> {
    let n = chol.dim();
    if values.len() != n || kernel_mean_at_x.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} integrand values and kernel means, got {} and {}",
            values.len(),
            kernel_mean_at_x.len()
        )));
    }
    if !(initial_error.is_finite() && initial_error >= 0.0) {
        return Err(Error::invalid(format!(
            "initial error must be nonnegative, got {initial_error}"
        )));
    }
    let white_mu = chol.whiten(&DVector::from_column_slice(kernel_mean_at_x));
    let white_f = chol.whiten(&DVector::from_column_slice(values));

    let mean = white_f.dot(&white_mu);
    let explained = white_mu.norm_squared();
    let mut variance = initial_error - explained;
    if variance < 0.0 {
        if variance >= -VARIANCE_CLAMP * initial_error {
            variance = 0.0;
        } else {
            return Err(Error::numerical(format!(
                "posterior variance {variance:e} is negative beyond round-off (initial error {initial_error:e})"
            )));
        }
    }
    if !mean.is_finite() {
        return Err(Error::numerical("posterior mean is not finite"));
    }
    Ok(NormalPosterior { mean, variance })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_kernel() -> GaussianKernel {
        GaussianKernel::isotropic(1.0, 1.0, 1).unwrap()
    }

    #[test]
    fn gram_single_point_is_amplitude() {
        let g = gram_matrix(&unit_kernel(), &[vec![0.0]]).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
    }

    #[test]
    fn gram_two_points() {
        let g = gram_matrix(&unit_kernel(), &[vec![0.0], vec![1.0]]).unwrap();
        assert_relative_eq!(g[(0, 1)], (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(g[(0, 1)], 0.606531, epsilon = 1e-6);
        assert_eq!(g[(0, 1)], g[(1, 0)]);
    }

    #[test]
    fn gram_anisotropic_matches_scalar_loop() {
        let kernel = GaussianKernel::new(2.0, vec![1.0, 2.0]).unwrap();
        let pts = vec![vec![0.0, 0.0], vec![1.0, 2.0]];
        let g = gram_matrix(&kernel, &pts).unwrap();
        // scalar loop oracle
        let mut s = 0.0;
        for d in 0..2 {
            let diff = pts[0][d] - pts[1][d];
            s += diff * diff / (2.0 * kernel.lengthscales()[d].powi(2));
        }
        let oracle = 2.0 * (-s).exp();
        assert_relative_eq!(g[(0, 1)], oracle, epsilon = 1e-15);
        assert_relative_eq!(g[(0, 1)], 0.735759, epsilon = 1e-6);
        assert_eq!(g[(0, 0)], 2.0);
    }

    #[test]
    fn gram_dimension_mismatch() {
        let err = gram_matrix(&unit_kernel(), &[vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn kernel_rejects_bad_parameters() {
        assert!(GaussianKernel::new(0.0, vec![1.0]).is_err());
        assert!(GaussianKernel::new(1.0, vec![1.0, -1.0]).is_err());
        assert!(GaussianKernel::new(1.0, vec![]).is_err());
        assert!(GaussianKernel::new(f64::NAN, vec![1.0]).is_err());
    }

    #[test]
    fn sample_set_validation() {
        assert!(SampleSet::new(vec![], vec![]).is_err());
        assert!(SampleSet::new(vec![vec![0.0]], vec![1.0, 2.0]).is_err());
        assert!(SampleSet::new(vec![vec![0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).is_err());
        assert!(SampleSet::new(vec![vec![f64::INFINITY]], vec![1.0]).is_err());
        assert!(SampleSet::new(vec![vec![0.0]], vec![f64::NAN]).is_err());
    }

    #[test]
    fn identity_solve() {
        let s = regularized_solve(
            &DMatrix::identity(3, 3),
            &DVector::from_vec(vec![1.0, 2.0, 3.0]),
        )
        .unwrap();
        for (got, want) in s.iter().zip([1.0, 2.0, 3.0]) {
            assert!(((got - want) / want).abs() <= 1e-6);
        }
    }

    #[test]
    fn singular_solve_has_small_residual() {
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let rhs = DVector::from_vec(vec![1.0, 1.0]);
        let chol = JitteredCholesky::new(&gram).unwrap();
        let s = chol.solve(&rhs);
        let shifted = &gram + DMatrix::identity(2, 2) * chol.jitter();
        assert!((shifted * &s - &rhs).norm() <= 1e-8);
    }

    #[test]
    fn zero_rank_matrix_escalates_jitter() {
        // Indefinite: no jitter up to the cap can make it positive definite.
        let gram = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match JitteredCholesky::new(&gram) {
            Err(Error::NumericalFailure(msg)) => assert!(msg.contains("1e-4"), "{msg}"),
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn solve_matches_dense_elimination_oracle() {
        let kernel = GaussianKernel::isotropic(1.0, 0.7, 1).unwrap();
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.9 - 4.0]).collect();
        let gram = gram_matrix(&kernel, &pts).unwrap();
        let rhs = DVector::from_fn(10, |i, _| (i as f64).sin() + 0.5);
        let chol = JitteredCholesky::new(&gram).unwrap();
        let s = chol.solve(&rhs);

        // Gaussian elimination with partial pivoting on the same shifted system.
        let n = 10;
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).map(|j| gram[(i, j)]).collect();
                row[i] += chol.jitter();
                row.push(rhs[i]);
                row
            })
            .collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
                .unwrap();
            a.swap(col, piv);
            for r in col + 1..n {
                let m = a[r][col] / a[col][col];
                for c in col..=n {
                    a[r][c] -= m * a[col][c];
                }
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let tail: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
            x[r] = (a[r][n] - tail) / a[r][r];
        }
        for i in 0..n {
            assert!(
                (s[i] - x[i]).abs() <= 1e-8 * x[i].abs().max(1.0),
                "{i}: {} vs {}",
                s[i],
                x[i]
            );
        }
    }

    #[test]
    #[allow(clippy::approx_constant)] // rounded example values
    fn posterior_single_point() {
        let samples = SampleSet::from_scalars(&[0.0], vec![2.0]).unwrap();
        let post = bq_posterior(&samples, &unit_kernel(), &[0.707107], 0.577350).unwrap();
        assert_relative_eq!(post.mean, 1.414214, epsilon = 1e-6);
        assert_relative_eq!(post.variance, 0.077350, epsilon = 1e-6);
    }

    #[test]
    fn posterior_zero_integrand_and_zero_kernel_mean() {
        let samples = SampleSet::from_scalars(&[0.0, 1.5], vec![0.0, 0.0]).unwrap();
        let with_f = samples.with_values(vec![3.0, -1.0]).unwrap();
        let mu = [0.4, 0.3];
        let a = bq_posterior(&samples, &unit_kernel(), &mu, 0.5).unwrap();
        let b = bq_posterior(&with_f, &unit_kernel(), &mu, 0.5).unwrap();
        assert_eq!(a.mean, 0.0);
        assert_eq!(a.variance, b.variance);

        let c = bq_posterior(&with_f, &unit_kernel(), &[0.0, 0.0], 0.5).unwrap();
        assert_eq!(c.mean, 0.0);
        assert_eq!(c.variance, 0.5);
    }

    #[test]
    fn negative_variance_is_clamped_or_rejected() {
        let samples = SampleSet::from_scalars(&[0.0], vec![1.0]).unwrap();
        // μ = 1 and initial error 1 - tiny: explained part exceeds initial error by round-off only.
        let post = bq_posterior(&samples, &unit_kernel(), &[1.0], 1.0 - 5e-9).unwrap();
        assert_eq!(post.variance, 0.0);
        let err = bq_posterior(&samples, &unit_kernel(), &[1.0], 0.5).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure(_)));
    }

    #[test]
    fn posterior_input_validation() {
        let samples = SampleSet::from_scalars(&[0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(bq_posterior(&samples, &unit_kernel(), &[0.5], 1.0).is_err());
        assert!(bq_posterior(&samples, &unit_kernel(), &[0.5, 0.5], -1.0).is_err());
    }

    #[test]
    fn duplicate_location_barely_moves_posterior() {
        let xs = [-1.2, 0.1, 0.9, 2.0];
        let fs = vec![0.3, 1.1, -0.4, 0.8];
        let mu = [0.35, 0.6, 0.5, 0.2];
        let kernel = unit_kernel();
        let base = bq_posterior(
            &SampleSet::from_scalars(&xs, fs.clone()).unwrap(),
            &kernel,
            &mu,
            0.7,
        )
        .unwrap();

        let mut xs2 = xs.to_vec();
        let mut fs2 = fs.clone();
        let mut mu2 = mu.to_vec();
        xs2.push(xs[1]);
        fs2.push(fs[1]);
        mu2.push(mu[1]);
        let dup = bq_posterior(
            &SampleSet::from_scalars(&xs2, fs2).unwrap(),
            &kernel,
            &mu2,
            0.7,
        )
        .unwrap();
        assert!(((dup.mean - base.mean) / base.mean).abs() <= 1e-6);
        assert!(((dup.variance - base.variance) / base.variance).abs() <= 1e-6);
    }

    proptest! {
        #[test]
        fn gram_is_exactly_symmetric(xs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..12),
                                     l1 in 0.1f64..3.0, l2 in 0.1f64..3.0) {
            let kernel = GaussianKernel::new(1.3, vec![l1, l2]).unwrap();
            let pts: Vec<Vec<f64>> = xs.iter().map(|&(a, b)| vec![a, b]).collect();
            let g = gram_matrix(&kernel, &pts).unwrap();
            prop_assert!(g == g.transpose());
            for i in 0..pts.len() {
                prop_assert_eq!(g[(i, i)], 1.3);
            }
        }

        #[test]
        fn mean_reproduces_kernel_span(xs in proptest::collection::vec(-4.0f64..4.0, 2..8),
                                      cs in proptest::collection::vec(-2.0f64..2.0, 8),
                                      mu in proptest::collection::vec(0.05f64..1.0, 8)) {
            // Well-separated points keep the system well conditioned.
            let mut pts = xs.clone();
            pts.sort_by(f64::total_cmp);
            pts.dedup_by(|a, b| (*a - *b).abs() < 0.5);
            let n = pts.len();
            let kernel = GaussianKernel::isotropic(1.0, 0.4, 1).unwrap();
            let locs: Vec<Vec<f64>> = pts.iter().map(|&x| vec![x]).collect();
            let gram = gram_matrix(&kernel, &locs).unwrap();
            let c = DVector::from_column_slice(&cs[..n]);
            let f = &gram * &c;
            let samples = SampleSet::new(locs, f.iter().copied().collect()).unwrap();
            let post = bq_posterior(&samples, &kernel, &mu[..n], 1.0e3).unwrap();
            let expected: f64 = c.iter().zip(&mu[..n]).map(|(a, b)| a * b).sum();
            prop_assert!((post.mean - expected).abs() <= 1e-8 * expected.abs().max(1.0),
                "{} vs {}", post.mean, expected);
        }
    }
}
