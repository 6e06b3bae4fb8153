//! Brute-force reference numerics for checking the closed forms in `dpmbq`.
//!
//! Everything here is deliberately naive: adaptive Gauss–Kronrod quadrature
//! on explicit breakpoints (callers nest it for two-dimensional integrals)
//! and empirical Kolmogorov–Smirnov distances.

use statrs::distribution::{ContinuousCDF, Normal};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_DEPTH: u32 = 40;

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let pair = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    // Below a few ulps of the panel value the error estimate is round-off.
    let floor = 8.0 * f64::EPSILON * value.abs();
    if err <= tol.max(floor) || depth >= MAX_DEPTH || (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
        return value;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth + 1) + adapt(f, m, b, 0.5 * tol, depth + 1)
}

/// `∫ f` over `[min(points), max(points)]`, adaptively on every gap between
/// consecutive breakpoints. Breakpoints should bracket every feature of `f`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = points.iter().copied().filter(|p| p.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let gaps = (pts.len().max(2) - 1) as f64;
    pts.windows(2)
        .map(|w| adapt(&f, w[0], w[1], tol / gaps, 0))
        .sum()
}

/// Breakpoints for integrands built from Gaussian bumps `(centre, scale)`.
/// Out to 40 scales each bump is below `exp(−800)`.
pub fn gaussian_breakpoints(bumps: &[(f64, f64)]) -> Vec<f64> {
    const OFFSETS: [f64; 13] = [
        -40.0, -20.0, -10.0, -6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0, 10.0, 20.0, 40.0,
    ];
    let mut pts = Vec::new();
    for &(c, s) in bumps {
        if s > 0.0 {
            pts.extend(OFFSETS.iter().map(|k| c + k * s));
        } else {
            pts.push(c);
        }
    }
    pts
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-0.5 * (x - mean) * (x - mean) / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn unit_kernel(x: f64, y: f64, l: f64) -> f64 {
    (-0.5 * (x - y) * (x - y) / (l * l)).exp()
}

/// `E[f(X)]` for `X ~ Σ wᵢ N(mᵢ, sᵢ²)`.
pub fn mixture_expectation<F: Fn(f64) -> f64>(
    f: F,
    weights: &[f64],
    means: &[f64],
    sds: &[f64],
    tol: f64,
) -> f64 {
    let bumps: Vec<(f64, f64)> = means.iter().copied().zip(sds.iter().copied()).collect();
    let density = |x: f64| -> f64 {
        weights
            .iter()
            .zip(means)
            .zip(sds)
            .map(|((w, m), s)| w * normal_pdf(x, *m, s * s))
            .sum()
    };
    integrate(|x| f(x) * density(x), &gaussian_breakpoints(&bumps), tol)
}

/// `∫ exp(−(x − y)²/(2l²)) N(y; m, v) dy` by quadrature.
pub fn smoothed_kernel(x: f64, l: f64, m: f64, v: f64, tol: f64) -> f64 {
    let mut pts = gaussian_breakpoints(&[(m, v.sqrt())]);
    pts.extend(gaussian_breakpoints(&[(x, l)]));
    integrate(|y| unit_kernel(x, y, l) * normal_pdf(y, m, v), &pts, tol)
}

/// `∬ exp(−(x − y)²/(2l²)) N(x; a) N(y; b) dx dy` for `a, b = (mean, variance)`,
/// by nested quadrature.
pub fn double_smoothed_kernel(l: f64, a: (f64, f64), b: (f64, f64), tol: f64) -> f64 {
    integrate(
        |x| normal_pdf(x, a.0, a.1) * smoothed_kernel(x, l, b.0, b.1, tol),
        &gaussian_breakpoints(&[(a.0, a.1.sqrt())]),
        tol,
    )
}

/// Sup distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let c = cdf(*x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

pub fn ks_distance_normal(samples: &[f64], mean: f64, sd: f64) -> f64 {
    let normal = Normal::new(mean, sd).expect("valid normal");
    ks_distance(samples, |x| normal.cdf(x))
}

/// Two-sample KS distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut b = b.to_vec();
    b.sort_by(f64::total_cmp);
    let nb = b.len() as f64;
    let cdf_b = |x: f64| b.partition_point(|v| *v <= x) as f64 / nb;
    let mut a = a.to_vec();
    a.sort_by(f64::total_cmp);
    let na = a.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in a.iter().enumerate() {
        let fb = cdf_b(*x);
        d = d.max(((i + 1) as f64 / na - fb).abs());
        let below = b.partition_point(|v| *v < *x) as f64 / nb;
        d = d.max((i as f64 / na - below).abs());
    }
    d
}
