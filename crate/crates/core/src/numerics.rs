//! Small numerical utilities shared across the crate: deterministic
//! summation, binomial confidence intervals, weighted line fits, and sphere
//! grids for direction scans.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Fixed-shape pairwise summation.
///
/// The reduction tree depends only on `xs.len()`, never on thread schedule,
/// so totals are bit-identical across serial and parallel callers that
/// assemble `xs` in index order. Accuracy is O(log n) ulps vs O(n) for a
/// running sum, which matters for the 2^21-point quadratures used by the
/// Gramian and rate round-trip checks.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const CUTOFF: usize = 32;
    if xs.len() <= CUTOFF {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and standard error of the mean (unbiased variance, two-pass).
pub fn mean_and_stderr(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need >= 2 samples for a standard error, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Wilson score interval for a binomial proportion.
///
/// Returns `(lo, hi)` with `0 <= lo <= p_hat <= hi <= 1`; never degenerate at
/// the boundary (count 0 still yields `hi > 0`), which is what makes it safe
/// for the log-probability fits downstream.
pub fn wilson_interval(count: usize, n: usize, z: f64) -> (f64, f64) {
    assert!(n > 0 && count <= n, "wilson_interval: count {count} / n {n}");
    let nf = n as f64;
    let p = count as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Weighted least-squares fit of `y ~ intercept + slope * x`.
///
/// Returns `(slope, intercept)`. Weights must be positive and finite.
pub fn weighted_affine_fit(points: &[(f64, f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "affine fit needs >= 3 points, got {}",
            points.len()
        )));
    }
    for &(x, y, w) in points {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && w > 0.0) {
            return Err(Error::NonFinite("weighted affine fit input".into()));
        }
    }
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let xbar: f64 = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ybar: f64 = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - xbar) * (p.0 - xbar)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData(
            "affine fit abscissae are all equal".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok((slope, ybar - slope * xbar))
}

/// Unsigned direction grid on the unit sphere in `R^dim`.
///
/// d=1: `{+1, -1}` (count ignored). d=2: `count` equispaced angles.
/// d=3: Fibonacci sphere with `count` points. Higher dimensions are not
/// supported.
pub fn unit_directions(dim: usize, count: usize) -> Result<Vec<DVector<f64>>> {
    match dim {
        0 => Err(Error::InvalidConfig("direction grid in dimension 0".into())),
        1 => Ok(vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![-1.0])]),
        2 => {
            let m = count.max(4);
            Ok((0..m)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                    DVector::from_vec(vec![th.cos(), th.sin()])
                })
                .collect())
        }
        3 => {
            let m = count.max(16);
            let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            Ok((0..m)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let th = golden * k as f64;
                    DVector::from_vec(vec![r * th.cos(), r * th.sin(), z])
                })
                .collect())
        }
        d => Err(Error::NotSupported(format!(
            "direction scan over the sphere in dimension {d} (supported: 1, 2, 3)"
        ))),
    }
}

/// Spectral (operator 2-)norm.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// 2-norm condition number; `f64::INFINITY` when numerically singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin <= 0.0 || !smin.is_finite() {
        f64::INFINITY
    } else {
        smax / smin
    }
}
