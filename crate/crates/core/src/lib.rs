//! Strongly damped Langevin dynamics in the moderate-deviation regime.
//!
//! The library covers three layers:
//!
//! * **Dynamics** — the second-order Langevin system
//!   `eps^2 q'' = b(q) - alpha(q) q' + sqrt(eps) sigma(q) w'` (position/momentum
//!   splitting integrator, [`sde`]), its first-order small-noise counterpart,
//!   and the deterministic relaxation limit `q0' = b(q0)/alpha(q0)`
//!   ([`limit_flow`]).
//! * **Rate functions** — the linear skeleton equation driven by controls and
//!   the associated action functionals: path rate, terminal hitting rate via
//!   the controllability Gramian, and exit rates over sub-horizons
//!   ([`skeleton`]).
//! * **Monte Carlo verification** — deterministic-seed exceedance estimators,
//!   moderate-deviation slope sweeps, remainder-decay sweeps, and weak
//!   convergence checks for controlled dynamics ([`mc`]).
//!
//! Fluctuations are always measured at the scale `sqrt(eps) * h(eps)` with
//! `h(eps) = eps^{-kappa}`, `kappa` in `(0, 1/2)`, so that `h^2(eps)` is the
//! deviation speed: `-log P[sup |X_eps| >= delta] ~ h^2(eps) * I(delta)`.

pub mod coefficients;
pub mod error;
pub mod grid;
pub mod limit_flow;
pub mod mc;
pub mod numerics;
pub mod sde;
pub mod skeleton;

pub use coefficients::{BoxDomain, CoefficientModel, HypothesisReport, ModelConstants};
pub use error::{Error, Result};
pub use grid::{Path, TimeGrid};
pub use limit_flow::{solve_limit_ode, transition_family, TransitionFamily};
pub use mc::{
    estimate_exceedance, mdp_slope_sweep, remainder_sweep, weak_convergence_check, McEstimate,
    RemainderSweep, SweepResult, WeakConvergence,
};
pub use sde::{
    fluctuation_path, remainder_decomposition, sample_noise, simulate_first_order,
    simulate_langevin, LangevinState, NoisePath, RemainderReport, SimConfig,
};
pub use skeleton::{
    controllability_gramian, exit_rate, rate_of_path, skeleton_map, terminal_rate, Control,
    RateResult,
};
