//! Monte Carlo verification harness
//!
//! Desk-scale experiments that confront the simulated dynamics with the
//! deviation theory:
//!
//! * [`estimate_exceedance`] — probability that the rescaled fluctuation
//!   leaves a ball, with a Wilson score interval;
//! * [`mdp_slope_sweep`] — regression of `-log p` against the deviation
//!   speed `h^2(eps)` across scales, compared with the exit rate predicted
//!   by the linearized rate function;
//! * [`remainder_sweep`] — decay of the normalized pathwise remainder as
//!   `eps` shrinks;
//! * [`weak_convergence_check`] — controlled fluctuations against the
//!   deterministic skeleton path they should concentrate on.
//!
//! Samples are indexed by noise stream, mapped in parallel with rayon, and
//! reduced with fixed-shape pairwise sums, so every report is reproducible
//! bit for bit regardless of the thread count.

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::limit_flow::{solve_limit_ode, transition_family};
use crate::numerics::{mean_and_stderr, weighted_affine_fit, wilson_interval};
use crate::sde::{
    fluctuation_path, remainder_decomposition, sample_noise, simulate_langevin, SimConfig,
};
use crate::skeleton::{exit_rate, skeleton_map, Control, RateResult};

/// Confidence level used for every interval in this module.
const WILSON_Z: f64 = 1.959963984540054;

/// Result of one exceedance experiment: `p = P(sup_t |X_eps(t)| >= delta)`
/// with a 95% Wilson score interval.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    pub probability: f64,
    pub exceedances: usize,
    pub samples: usize,
    pub lo: f64,
    pub hi: f64,
}

fn check_mc_sizes(samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(Error::InvalidConfig("sample count must be >= 1".into()));
    }
    Ok(())
}

/// Estimate `P(sup_t |X_eps(t)| >= delta)` by direct simulation, where
/// `X_eps = (q_eps - q0)/(sqrt(eps) h(eps))` and the sup runs over coarse
/// grid nodes. Sample `i` uses noise stream `i`.
pub fn estimate_exceedance(
    model: &CoefficientModel,
    config: &SimConfig,
    delta: f64,
    samples: usize,
) -> Result<McEstimate> {
    check_mc_sizes(samples)?;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "exceedance threshold must be >= 0, got {delta}"
        )));
    }
    let q0 = solve_limit_ode(model, config.q_init(), *config.grid())?;
    let flags = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let noise = sample_noise(config, i as u64);
            let state = simulate_langevin(model, config, &noise, None)?;
            let x = fluctuation_path(&state.positions, &q0, config)?;
            Ok(x.sup_norm() >= delta)
        })
        .collect::<Result<Vec<bool>>>()?;
    let exceedances = flags.iter().filter(|b| **b).count();
    let (lo, hi) = wilson_interval(exceedances, samples, WILSON_Z);
    Ok(McEstimate {
        probability: exceedances as f64 / samples as f64,
        exceedances,
        samples,
        lo,
        hi,
    })
}

/// One scale of an MDP sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    /// Deviation speed `h^2(eps) = eps^{-2 kappa}`.
    pub h_squared: f64,
    pub probability: f64,
    pub lo: f64,
    pub hi: f64,
    pub exceedances: usize,
    pub samples: usize,
}

/// Regression of `-log p` on the deviation speed, with the rate-function
/// prediction it should reproduce.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub delta: f64,
    pub kappa: f64,
    pub rows: Vec<SweepRow>,
    /// Fitted slope of `-log p` vs `h^2(eps)`; the theory says it converges
    /// to the exit rate at radius `delta`.
    pub slope: f64,
    pub intercept: f64,
    /// Exit rate of the linearized problem at radius `delta`.
    pub reference_rate: f64,
    pub relative_gap: f64,
    pub reference: RateResult,
}

/// Run [`estimate_exceedance`] at each scale in `eps_list` (common seed, the
/// same stream indices at every scale) and regress `-log p` on `h^2(eps)`
/// with weights `n p / (1 - p)`, the asymptotic inverse variance of
/// `-log p_hat`. Rows with degenerate estimates (`p_hat` of 0 or 1) are
/// excluded from the fit; at least three informative rows are required.
///
/// The reference exit rate is evaluated on a `rate_steps`-cell grid, which
/// should be much finer than the simulation grid.
pub fn mdp_slope_sweep(
    model: &CoefficientModel,
    base: &SimConfig,
    delta: f64,
    eps_list: &[f64],
    samples_per_scale: usize,
    rate_steps: usize,
) -> Result<SweepResult> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sweep threshold must be > 0, got {delta}"
        )));
    }
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one scale".into()));
    }
    if rate_steps < 16 {
        return Err(Error::InvalidConfig(
            "reference rate grid needs at least 16 cells".into(),
        ));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let cfg = base.with_epsilon(eps)?;
        let est = estimate_exceedance(model, &cfg, delta, samples_per_scale)?;
        rows.push(SweepRow {
            epsilon: eps,
            h_squared: cfg.h_eps() * cfg.h_eps(),
            probability: est.probability,
            lo: est.lo,
            hi: est.hi,
            exceedances: est.exceedances,
            samples: est.samples,
        });
    }

    let points: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.probability > 0.0 && r.probability < 1.0)
        .map(|r| {
            let p = r.probability;
            let weight = r.samples as f64 * p / (1.0 - p);
            (r.h_squared, -p.ln(), weight)
        })
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} informative scales (estimates strictly inside (0,1)); need >= 3 \
             -- adjust delta or the sample count",
            points.len()
        )));
    }
    let (slope, intercept) = weighted_affine_fit(&points)?;

    let rate_grid = TimeGrid::new(base.grid().horizon(), rate_steps)?;
    let q0 = solve_limit_ode(model, base.q_init(), rate_grid)?;
    let phis = transition_family(model, &q0)?;
    let reference = exit_rate(model, &q0, &phis, delta)?;
    let relative_gap = (slope - reference.rate).abs() / reference.rate;
    Ok(SweepResult {
        delta,
        kappa: base.kappa(),
        rows,
        slope,
        intercept,
        reference_rate: reference.rate,
        relative_gap,
        reference,
    })
}

/// Remainder statistics at one scale.
#[derive(Debug, Clone, Serialize)]
pub struct RemainderRow {
    pub epsilon: f64,
    pub h_eps: f64,
    /// Mean of `sup_t |R| / (sqrt(eps) h(eps))` over samples.
    pub mean_normalized: f64,
    pub stderr: f64,
    pub mean_h1: f64,
    pub mean_h2: f64,
    pub samples: usize,
}

/// Decay of the normalized remainder across scales.
#[derive(Debug, Clone, Serialize)]
pub struct RemainderSweep {
    pub controlled: bool,
    pub rows: Vec<RemainderRow>,
    /// Consecutive rows separated by two standard errors, in list order.
    pub strictly_decreasing_2se: bool,
    /// Slope of `log mean` vs `log eps` (requires two or more scales).
    pub loglog_slope: Option<f64>,
}

/// Mean normalized remainder at each scale in `eps_list` (common stream
/// indices). The scales are processed in the order given; pass them
/// decreasing to read the monotonicity flag as "remainder shrinks with
/// `eps`".
pub fn remainder_sweep(
    model: &CoefficientModel,
    base: &SimConfig,
    eps_list: &[f64],
    samples_per_scale: usize,
    control: Option<&Control>,
) -> Result<RemainderSweep> {
    check_mc_sizes(samples_per_scale)?;
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one scale".into()));
    }
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let cfg = base.with_epsilon(eps)?;
        let reports = (0..samples_per_scale)
            .into_par_iter()
            .map(|i| -> Result<(f64, f64, f64)> {
                let noise = sample_noise(&cfg, i as u64);
                let (_, rep) = remainder_decomposition(model, &cfg, &noise, control)?;
                Ok((rep.normalized_remainder, rep.h1_sup, rep.h2_sup))
            })
            .collect::<Result<Vec<_>>>()?;
        let norms: Vec<f64> = reports.iter().map(|r| r.0).collect();
        let h1s: Vec<f64> = reports.iter().map(|r| r.1).collect();
        let h2s: Vec<f64> = reports.iter().map(|r| r.2).collect();
        let (mean, se) = mean_and_stderr(&norms)?;
        rows.push(RemainderRow {
            epsilon: eps,
            h_eps: cfg.h_eps(),
            mean_normalized: mean,
            stderr: se,
            mean_h1: mean_and_stderr(&h1s)?.0,
            mean_h2: mean_and_stderr(&h2s)?.0,
            samples: samples_per_scale,
        });
    }
    let strictly_decreasing_2se = rows.windows(2).all(|w| {
        w[1].mean_normalized + 2.0 * w[1].stderr < w[0].mean_normalized - 2.0 * w[0].stderr
    });
    let loglog_slope = if rows.len() >= 2 {
        let pts: Vec<(f64, f64, f64)> = rows
            .iter()
            .filter(|r| r.mean_normalized > 0.0)
            .map(|r| (r.epsilon.ln(), r.mean_normalized.ln(), 1.0))
            .collect();
        if pts.len() >= 3 {
            weighted_affine_fit(&pts).ok().map(|(s, _)| s)
        } else if pts.len() == 2 {
            Some((pts[1].1 - pts[0].1) / (pts[1].0 - pts[0].0))
        } else {
            None
        }
    } else {
        None
    };
    Ok(RemainderSweep {
        controlled: control.is_some(),
        rows,
        strictly_decreasing_2se,
        loglog_slope,
    })
}

/// Distance statistics of controlled fluctuations from their skeleton
/// target at one scale.
#[derive(Debug, Clone, Serialize)]
pub struct WeakRow {
    pub epsilon: f64,
    pub mean_sup_distance: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Controlled fluctuations against the skeleton path of the same control.
#[derive(Debug, Clone, Serialize)]
pub struct WeakConvergence {
    pub rows: Vec<WeakRow>,
    /// Sup-norm of the deterministic target path.
    pub target_sup: f64,
    /// `L^2` energy of the control, i.e. the rate-function cost of the
    /// target.
    pub control_energy: f64,
    /// First mean divided by last mean (> 1 when concentration improves as
    /// `eps` shrinks along the list order).
    pub drop_factor: Option<f64>,
}

/// Simulate the controlled dynamics at each scale and measure
/// `sup_t |X_eps^u - psi_u|`, where `psi_u` is the skeleton path driven by
/// the same control. Under the moderate-deviation scaling the mean distance
/// must shrink as `eps` does.
pub fn weak_convergence_check(
    model: &CoefficientModel,
    base: &SimConfig,
    control: &Control,
    eps_list: &[f64],
    samples_per_scale: usize,
) -> Result<WeakConvergence> {
    check_mc_sizes(samples_per_scale)?;
    if eps_list.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one scale".into()));
    }
    let q0 = solve_limit_ode(model, base.q_init(), *base.grid())?;
    let target = skeleton_map(model, &q0, control)?;
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let cfg = base.with_epsilon(eps)?;
        let dists = (0..samples_per_scale)
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let noise = sample_noise(&cfg, i as u64);
                let state = simulate_langevin(model, &cfg, &noise, Some(control))?;
                let x = fluctuation_path(&state.positions, &q0, &cfg)?;
                x.sup_distance(&target)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, se) = mean_and_stderr(&dists)?;
        rows.push(WeakRow {
            epsilon: eps,
            mean_sup_distance: mean,
            stderr: se,
            samples: samples_per_scale,
        });
    }
    let drop_factor = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if rows.len() >= 2 && b.mean_sup_distance > 0.0 => {
            Some(a.mean_sup_distance / b.mean_sup_distance)
        }
        _ => None,
    };
    Ok(WeakConvergence {
        rows,
        target_sup: target.sup_norm(),
        control_energy: control.energy(),
        drop_factor,
    })
}
