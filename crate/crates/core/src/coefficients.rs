//! Coefficient models for the damped dynamics: drift `b`, diffusion `sigma`,
//! scalar damping `alpha`, optional analytic Jacobian hooks, and the declared
//! regularity constants used by the rate-function estimates.
//!
//! The declared constants are *claims*; [`validate_hypothesis`] spot-checks
//! them empirically on a box and reports per-clause results without mutating
//! the model.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};

type VecFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// cbrt(machine epsilon): the usual central-difference step scale.
const FD_SCALE: f64 = 6.055454452393343e-6;

/// Declared regularity constants.
///
/// `lipschitz` bounds the Lipschitz constants of `b` and `sigma`, the
/// Hilbert-Schmidt norm of `sigma`, and `|grad alpha|`; `alpha_min` and
/// `alpha_max` bound the damping from below and above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelConstants {
    pub lipschitz: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl ModelConstants {
    fn validate(&self) -> Result<()> {
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lipschitz constant must be positive, got {}",
                self.lipschitz
            )));
        }
        if !(self.alpha_min.is_finite()
            && self.alpha_max.is_finite()
            && self.alpha_min > 0.0
            && self.alpha_max >= self.alpha_min)
        {
            return Err(Error::InvalidConfig(format!(
                "need 0 < alpha_min <= alpha_max, got [{}, {}]",
                self.alpha_min, self.alpha_max
            )));
        }
        Ok(())
    }
}

/// State-dependent coefficients of the damped system
/// `eps^2 q'' = b(q) - alpha(q) q' + sqrt(eps) sigma(q) w'`.
#[derive(Clone)]
pub struct CoefficientModel {
    dim: usize,
    drift: VecFn,
    diffusion: MatFn,
    damping: ScalarFn,
    drift_jacobian: Option<MatFn>,
    damping_gradient: Option<VecFn>,
    constants: ModelConstants,
}

impl fmt::Debug for CoefficientModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientModel")
            .field("dim", &self.dim)
            .field("constants", &self.constants)
            .field("analytic_jacobian", &self.drift_jacobian.is_some())
            .field("analytic_damping_gradient", &self.damping_gradient.is_some())
            .finish()
    }
}

pub struct CoefficientModelBuilder {
    dim: usize,
    drift: Option<VecFn>,
    diffusion: Option<MatFn>,
    damping: Option<ScalarFn>,
    drift_jacobian: Option<MatFn>,
    damping_gradient: Option<VecFn>,
    constants: Option<ModelConstants>,
}

impl CoefficientModelBuilder {
    pub fn drift(mut self, f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn diffusion(
        mut self,
        f: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Some(Arc::new(f));
        self
    }

    pub fn damping(mut self, f: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        self.damping = Some(Arc::new(f));
        self
    }

    pub fn drift_jacobian(
        mut self,
        f: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.drift_jacobian = Some(Arc::new(f));
        self
    }

    pub fn damping_gradient(
        mut self,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.damping_gradient = Some(Arc::new(f));
        self
    }

    pub fn constants(mut self, lipschitz: f64, alpha_min: f64, alpha_max: f64) -> Self {
        self.constants = Some(ModelConstants { lipschitz, alpha_min, alpha_max });
        self
    }

    /// Checks dimensions and finiteness by probing the closures at the
    /// origin; cheap sanity, not a proof of regularity.
    pub fn build(self) -> Result<CoefficientModel> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("model dimension must be >= 1".into()));
        }
        let constants = self
            .constants
            .ok_or_else(|| Error::InvalidConfig("model constants not set".into()))?;
        constants.validate()?;
        let model = CoefficientModel {
            dim: self.dim,
            drift: self
                .drift
                .ok_or_else(|| Error::InvalidConfig("drift not set".into()))?,
            diffusion: self
                .diffusion
                .ok_or_else(|| Error::InvalidConfig("diffusion not set".into()))?,
            damping: self
                .damping
                .ok_or_else(|| Error::InvalidConfig("damping not set".into()))?,
            drift_jacobian: self.drift_jacobian,
            damping_gradient: self.damping_gradient,
            constants,
        };
        let origin = DVector::zeros(model.dim);
        let b = model.drift(&origin);
        if b.len() != model.dim || !b.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "drift at origin: wrong dimension or non-finite (len {})",
                b.len()
            )));
        }
        let s = model.diffusion(&origin);
        if s.nrows() != model.dim || s.ncols() != model.dim || !s.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "diffusion at origin: expected {0}x{0}, got {1}x{2}",
                model.dim,
                s.nrows(),
                s.ncols()
            )));
        }
        if !model.damping_value(&origin).is_finite() {
            return Err(Error::InvalidConfig("damping at origin is not finite".into()));
        }
        if let Some(j) = &model.drift_jacobian {
            let m = j(&origin);
            if m.nrows() != model.dim || m.ncols() != model.dim {
                return Err(Error::InvalidConfig("drift Jacobian hook has wrong shape".into()));
            }
        }
        if let Some(g) = &model.damping_gradient {
            if g(&origin).len() != model.dim {
                return Err(Error::InvalidConfig(
                    "damping gradient hook has wrong dimension".into(),
                ));
            }
        }
        Ok(model)
    }
}

impl CoefficientModel {
    pub fn builder(dim: usize) -> CoefficientModelBuilder {
        CoefficientModelBuilder {
            dim,
            drift: None,
            diffusion: None,
            damping: None,
            drift_jacobian: None,
            damping_gradient: None,
            constants: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constants(&self) -> ModelConstants {
        self.constants
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(x)
    }

    pub fn diffusion(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.diffusion)(x)
    }

    pub fn damping_value(&self, x: &DVector<f64>) -> f64 {
        (self.damping)(x)
    }

    /// Damping with the positivity check required by every consumer.
    pub fn damping_checked(&self, x: &DVector<f64>) -> Result<f64> {
        let a = self.damping_value(x);
        if a > 0.0 && a.is_finite() {
            Ok(a)
        } else {
            Err(Error::NonPositiveDamping { alpha: a, at: x.as_slice().to_vec() })
        }
    }

    /// Relaxation drift `b(x) / alpha(x)`.
    pub fn drift_ratio(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.damping_checked(x)?;
        Ok(self.drift(x) / a)
    }

    /// `grad alpha(x)`: analytic hook when provided, otherwise central
    /// differences with per-coordinate step `cbrt(mach_eps) * max(1, |x_j|)`.
    pub fn damping_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        if let Some(g) = &self.damping_gradient {
            return g(x);
        }
        let mut grad = DVector::zeros(self.dim);
        let mut xp = x.clone();
        for j in 0..self.dim {
            let eta = FD_SCALE * x[j].abs().max(1.0);
            xp[j] = x[j] + eta;
            let up = self.damping_value(&xp);
            xp[j] = x[j] - eta;
            let dn = self.damping_value(&xp);
            xp[j] = x[j];
            grad[j] = (up - dn) / (2.0 * eta);
        }
        grad
    }

    /// Jacobian of the relaxation drift `D(b/alpha)`.
    ///
    /// With an analytic drift Jacobian this is the product rule
    /// `Db/alpha - b (grad alpha)^T / alpha^2` (exact for constant damping);
    /// otherwise central finite differences of `b/alpha` column by column.
    pub fn drift_ratio_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let a = self.damping_checked(x)?;
        if let Some(jac) = &self.drift_jacobian {
            let db = jac(x);
            let b = self.drift(x);
            let grad = self.damping_gradient(x);
            return Ok(db / a - b * grad.transpose() / (a * a));
        }
        let mut out = DMatrix::zeros(self.dim, self.dim);
        let mut xp = x.clone();
        for j in 0..self.dim {
            let eta = FD_SCALE * x[j].abs().max(1.0);
            xp[j] = x[j] + eta;
            let up = self.drift_ratio(&xp)?;
            xp[j] = x[j] - eta;
            let dn = self.drift_ratio(&xp)?;
            xp[j] = x[j];
            out.set_column(j, &((up - dn) / (2.0 * eta)));
        }
        Ok(out)
    }
}

/// Axis-aligned box, the sampling domain for hypothesis checks.
#[derive(Debug, Clone)]
pub struct BoxDomain {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxDomain {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidConfig("box bounds have mismatched dimensions".into()));
        }
        for j in 0..lower.len() {
            if !(lower[j].is_finite() && upper[j].is_finite() && lower[j] < upper[j]) {
                return Err(Error::InvalidConfig(format!(
                    "degenerate box in coordinate {j}: [{}, {}]",
                    lower[j], upper[j]
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    /// Centered cube `[-r, r]^dim`.
    pub fn centered(dim: usize, r: f64) -> Result<Self> {
        BoxDomain::new(
            DVector::from_element(dim, -r),
            DVector::from_element(dim, r),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(self.dim(), |j, _| rng.random_range(self.lower[j]..self.upper[j]))
    }

    fn perturb(&self, x: &DVector<f64>, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(self.dim(), |j, _| {
            let r = 1e-3 * (self.upper[j] - self.lower[j]);
            (x[j] + rng.random_range(-r..r)).clamp(self.lower[j], self.upper[j])
        })
    }
}

/// One regularity clause: the worst empirically observed constant against the
/// declared bound.
#[derive(Debug, Clone, Serialize)]
pub struct ClauseCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value (max for upper-bound clauses, min for
    /// lower-bound clauses).
    pub observed: f64,
    /// Declared bound the observation is compared against.
    pub bound: f64,
}

/// Outcome of [`validate_hypothesis`]: seven clauses, report-only.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub clauses: Vec<ClauseCheck>,
    pub samples: usize,
    pub all_passed: bool,
}

impl HypothesisReport {
    pub fn clause(&self, name: &str) -> Option<&ClauseCheck> {
        self.clauses.iter().find(|c| c.name == name)
    }
}

/// Empirically spot-check the declared model constants on a box.
///
/// Seven clauses: Lipschitz bounds for `b` and `sigma` (difference quotients
/// over sampled pairs), the Hilbert-Schmidt bound and uniform invertibility
/// of `sigma`, and lower/upper/gradient bounds for `alpha`. Upper-bound
/// clauses pass when `observed <= bound * (1 + tol)`, the damping lower bound
/// when `observed >= alpha_min * (1 - tol)`, and invertibility when the
/// smallest singular value of `sigma` stays `>= tol` (absolute floor).
///
/// Half of the sampled pairs are independent draws, half are near-diagonal
/// perturbations, so both global and local Lipschitz behavior get probed.
/// The result is a report; nothing fails hard.
pub fn validate_hypothesis(
    model: &CoefficientModel,
    domain: &BoxDomain,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<HypothesisReport> {
    if domain.dim() != model.dim() {
        return Err(Error::Incompatible(format!(
            "box dimension {} vs model dimension {}",
            domain.dim(),
            model.dim()
        )));
    }
    if samples < 2 {
        return Err(Error::InsufficientData("hypothesis check needs >= 2 samples".into()));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let k = model.constants.lipschitz;

    let mut b_lip = 0.0f64;
    let mut sigma_lip = 0.0f64;
    let mut sigma_hs = 0.0f64;
    let mut sigma_min_sv = f64::INFINITY;
    let mut alpha_lo = f64::INFINITY;
    let mut alpha_hi = f64::NEG_INFINITY;
    let mut grad_alpha = 0.0f64;

    for i in 0..samples {
        let x = domain.sample(&mut rng);
        let y = if i % 2 == 0 { domain.sample(&mut rng) } else { domain.perturb(&x, &mut rng) };

        let bx = model.drift(&x);
        let sx = model.diffusion(&x);
        let ax = model.damping_value(&x);

        sigma_hs = sigma_hs.max(sx.norm());
        let sv_min = sx.clone().svd(false, false).singular_values.min();
        sigma_min_sv = sigma_min_sv.min(sv_min);
        alpha_lo = alpha_lo.min(ax);
        alpha_hi = alpha_hi.max(ax);
        grad_alpha = grad_alpha.max(model.damping_gradient(&x).norm());

        let dist = (&x - &y).norm();
        if dist > 0.0 {
            b_lip = b_lip.max((bx - model.drift(&y)).norm() / dist);
            sigma_lip = sigma_lip.max((sx - model.diffusion(&y)).norm() / dist);
        }
    }

    let up = k * (1.0 + tol);
    let clauses = vec![
        ClauseCheck { name: "b_lipschitz", passed: b_lip <= up, observed: b_lip, bound: k },
        ClauseCheck { name: "sigma_lipschitz", passed: sigma_lip <= up, observed: sigma_lip, bound: k },
        ClauseCheck { name: "sigma_bounded", passed: sigma_hs <= up, observed: sigma_hs, bound: k },
        ClauseCheck {
            name: "sigma_invertible",
            passed: sigma_min_sv >= tol,
            observed: sigma_min_sv,
            bound: tol,
        },
        ClauseCheck {
            name: "alpha_lower",
            passed: alpha_lo >= model.constants.alpha_min * (1.0 - tol),
            observed: alpha_lo,
            bound: model.constants.alpha_min,
        },
        ClauseCheck {
            name: "alpha_upper",
            passed: alpha_hi <= model.constants.alpha_max * (1.0 + tol),
            observed: alpha_hi,
            bound: model.constants.alpha_max,
        },
        ClauseCheck { name: "alpha_gradient", passed: grad_alpha <= up, observed: grad_alpha, bound: k },
    ];
    let all_passed = clauses.iter().all(|c| c.passed);
    Ok(HypothesisReport { clauses, samples, all_passed })
}

/// Built-in coefficient models, also exposed by name for the CLI.
pub mod builtins {
    use super::*;

    /// `b = -a x`, `sigma = s I`, constant damping `c`. Every hypothesis
    /// clause holds globally; the workhorse for closed-form cross-checks.
    ///
    /// `s = 0` is allowed for noiseless simulation runs; rate computations
    /// reject the degenerate diffusion when they need its inverse.
    pub fn linear(dim: usize, a: f64, s: f64, c: f64) -> Result<CoefficientModel> {
        if !(a.is_finite() && s.is_finite() && s >= 0.0 && c.is_finite() && c > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "linear model needs finite a, s >= 0, c > 0 (got a={a}, sigma={s}, alpha={c})"
            )));
        }
        let k = a.abs().max(s * (dim as f64).sqrt()).max(1e-12);
        CoefficientModel::builder(dim)
            .drift(move |x| -a * x)
            .diffusion(move |x| DMatrix::identity(x.len(), x.len()) * s)
            .damping(move |_| c)
            .drift_jacobian(move |x| -a * DMatrix::identity(x.len(), x.len()))
            .damping_gradient(|x| DVector::zeros(x.len()))
            .constants(k, c, c)
            .build()
    }

    /// Smooth double-well shape `theta(y) = (y - y^3)/(1 + y^4)` applied
    /// componentwise: bounded, globally Lipschitz (constant ~1.046), with
    /// stable wells at y = +-1.
    pub fn double_well(dim: usize, scale: f64, s: f64, c: f64) -> Result<CoefficientModel> {
        if !(scale.is_finite() && scale > 0.0 && s > 0.0 && c > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "double-well model needs scale > 0, sigma > 0, alpha > 0 \
                 (got scale={scale}, sigma={s}, alpha={c})"
            )));
        }
        let k = (1.05 * scale).max(s * (dim as f64).sqrt());
        CoefficientModel::builder(dim)
            .drift(move |x| x.map(|y| scale * theta(y)))
            .diffusion(move |x| DMatrix::identity(x.len(), x.len()) * s)
            .damping(move |_| c)
            .drift_jacobian(move |x| {
                DMatrix::from_diagonal(&x.map(|y| scale * theta_prime(y)))
            })
            .damping_gradient(|x| DVector::zeros(x.len()))
            .constants(k, c, c)
            .build()
    }

    /// Planar rotation drift `b = omega (x2, -x1)` with state-dependent
    /// damping `alpha = base + amp sin(x1)`; exercises the `grad alpha`
    /// remainder terms. Requires `base > amp >= 0`.
    pub fn trig_rotation(omega: f64, s: f64, base: f64, amp: f64) -> Result<CoefficientModel> {
        if !(omega.is_finite() && s > 0.0 && amp >= 0.0 && base > amp) {
            return Err(Error::InvalidConfig(format!(
                "trig model needs sigma > 0 and base > amp >= 0 \
                 (got omega={omega}, sigma={s}, base={base}, amp={amp})"
            )));
        }
        let k = omega.abs().max(s * 2.0f64.sqrt()).max(amp).max(1e-12);
        CoefficientModel::builder(2)
            .drift(move |x| DVector::from_vec(vec![omega * x[1], -omega * x[0]]))
            .diffusion(move |x| DMatrix::identity(x.len(), x.len()) * s)
            .damping(move |x| base + amp * x[0].sin())
            .drift_jacobian(move |_| {
                DMatrix::from_row_slice(2, 2, &[0.0, omega, -omega, 0.0])
            })
            .damping_gradient(move |x| DVector::from_vec(vec![amp * x[0].cos(), 0.0]))
            .constants(k, base - amp, base + amp)
            .build()
    }

    fn theta(y: f64) -> f64 {
        (y - y.powi(3)) / (1.0 + y.powi(4))
    }

    fn theta_prime(y: f64) -> f64 {
        let d = 1.0 + y.powi(4);
        ((1.0 - 3.0 * y * y) * d - (y - y.powi(3)) * 4.0 * y.powi(3)) / (d * d)
    }

    pub const NAMES: &[&str] = &["linear", "double_well", "trig_rotation"];

    /// Build a model by registry name; used by the CLI config layer.
    /// Unknown names and unknown parameter keys are rejected.
    pub fn from_name(
        name: &str,
        dim: usize,
        params: &BTreeMap<String, f64>,
    ) -> Result<CoefficientModel> {
        let get = |key: &str, default: f64| params.get(key).copied().unwrap_or(default);
        let check_keys = |allowed: &[&str]| -> Result<()> {
            for k in params.keys() {
                if !allowed.contains(&k.as_str()) {
                    return Err(Error::InvalidConfig(format!(
                        "unknown parameter {k:?} for model {name:?} (allowed: {allowed:?})"
                    )));
                }
            }
            Ok(())
        };
        match name {
            "linear" => {
                check_keys(&["a", "sigma", "alpha"])?;
                linear(dim, get("a", 1.0), get("sigma", 1.0), get("alpha", 1.0))
            }
            "double_well" => {
                check_keys(&["scale", "sigma", "alpha"])?;
                double_well(dim, get("scale", 1.0), get("sigma", 1.0), get("alpha", 1.0))
            }
            "trig_rotation" => {
                check_keys(&["omega", "sigma", "alpha_base", "alpha_amp"])?;
                if dim != 2 {
                    return Err(Error::InvalidConfig(format!(
                        "trig_rotation is a planar model (dim 2), got dim {dim}"
                    )));
                }
                trig_rotation(
                    get("omega", 1.0),
                    get("sigma", 1.0),
                    get("alpha_base", 1.0),
                    get("alpha_amp", 0.5),
                )
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown model {other:?} (available: {NAMES:?})"
            ))),
        }
    }
}
