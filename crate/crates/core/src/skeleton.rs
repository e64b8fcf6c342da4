//! The skeleton equation of the moderate-deviation principle and its action
//! functionals.
//!
//! Along a relaxation path `q0` the fluctuation limit solves the linear
//! controlled system
//!
//! ```text
//! g'(t) = A(t) g(t) + B(t) u(t),    g(0) = 0,
//! A(t) = D(b/alpha)(q0(t)),         B(t) = sigma(q0(t)) / alpha(q0(t)),
//! ```
//!
//! where `u = h'` is a square-integrable control. The rate of a fluctuation
//! profile is half the minimal control energy producing it; hitting and exit
//! rates minimize that energy over terminal constraints, which reduces to
//! controllability-Gramian algebra in the transition-matrix frame.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::grid::{Path, TimeGrid};
use crate::limit_flow::{linearize, LinearizedCoeffs, TransitionFamily};
use crate::numerics::{pairwise_sum, unit_directions};

/// Relative spectral floor below which Gramian directions are treated as
/// unreachable (regularized inverse) or exit times as degenerate (skipped).
const GRAMIAN_FLOOR: f64 = 1e-14;

/// Condition-number guard for the nodewise diffusion solves in
/// [`rate_of_path`].
const DIFFUSION_COND_MAX: f64 = 1e12;

/// A piecewise-constant control `u = h'`: one value per grid cell, constant
/// on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>, // steps * dim, row-major by cell
}

impl Control {
    pub fn zeros(grid: TimeGrid, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("control dimension must be >= 1".into()));
        }
        Ok(Control { grid, dim, data: vec![0.0; grid.steps() * dim] })
    }

    /// Sample `f` at the left endpoint of every cell.
    pub fn from_fn(
        grid: TimeGrid,
        dim: usize,
        mut f: impl FnMut(f64) -> DVector<f64>,
    ) -> Result<Self> {
        let mut c = Control::zeros(grid, dim)?;
        for k in 0..grid.steps() {
            let v = f(grid.node(k));
            if v.len() != dim {
                return Err(Error::Incompatible(format!(
                    "control sampler returned dimension {} at cell {k}, expected {dim}",
                    v.len()
                )));
            }
            c.set_value(k, &v);
        }
        c.ensure_finite()?;
        Ok(c)
    }

    pub fn constant(grid: TimeGrid, v: &DVector<f64>) -> Result<Self> {
        Control::from_fn(grid, v.len(), |_| v.clone())
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.value_slice(k))
    }

    pub fn value_slice(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn set_value(&mut self, k: usize, v: &DVector<f64>) {
        assert_eq!(v.len(), self.dim, "control value has wrong dimension");
        self.data[k * self.dim..(k + 1) * self.dim].copy_from_slice(v.as_slice());
    }

    /// `(1/2) sum_k |u_k|^2 dt` — half the squared `L^2` norm, i.e. the
    /// action of this control. Pairwise-summed, deterministic.
    pub fn energy(&self) -> f64 {
        let dt = self.grid.dt();
        let cells: Vec<f64> = (0..self.grid.steps())
            .map(|k| self.value_slice(k).iter().map(|x| x * x).sum::<f64>() * dt)
            .collect();
        0.5 * pairwise_sum(&cells)
    }

    pub fn scale(&self, a: f64) -> Control {
        Control {
            grid: self.grid,
            dim: self.dim,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn linear_combination(&self, a: f64, other: &Control, b: f64) -> Result<Control> {
        if self.dim != other.dim || !self.grid.compatible(&other.grid) {
            return Err(Error::Incompatible(
                "control combination needs equal grids and dimensions".into(),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Control { grid: self.grid, dim: self.dim, data })
    }

    /// Write as CSV with header `t,u1,...,ud`, one row per cell at its left
    /// endpoint. Same float formatting contract as [`Path::write_csv`].
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t");
        for j in 1..=self.dim {
            header.push_str(&format!(",u{j}"));
        }
        writeln!(w, "{header}")?;
        let mut line = String::new();
        for k in 0..self.grid.steps() {
            line.clear();
            line.push_str(&format!("{}", self.grid.node(k)));
            for x in self.value_slice(k) {
                line.push_str(&format!(",{x}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("control values".into()))
        }
    }
}

/// Outcome of a rate computation, together with the minimizing control.
///
/// `t_star`/`direction` carry the achieving time and target point for hitting
/// and exit problems (`None` for path rates). `gramian_condition` reports the
/// conditioning of the linear algebra behind the number: the Gramian spectrum
/// for hitting/exit rates, the worst nodewise diffusion solve for path rates.
/// `skipped_t_stars` counts candidate exit times dropped for numerical
/// degeneracy. Serializes without the control (report form).
#[derive(Debug, Clone, Serialize)]
pub struct RateResult {
    pub rate: f64,
    pub t_star: Option<f64>,
    pub direction: Option<Vec<f64>>,
    pub gramian_condition: f64,
    pub residual: f64,
    pub skipped_t_stars: usize,
    #[serde(skip)]
    pub optimal_control: Control,
}

fn check_pair(model: &CoefficientModel, q0path: &Path) -> Result<()> {
    if q0path.dim() != model.dim() {
        return Err(Error::Incompatible(format!(
            "path dimension {} vs model dimension {}",
            q0path.dim(),
            model.dim()
        )));
    }
    Ok(())
}

fn check_family(q0path: &Path, phis: &TransitionFamily) -> Result<()> {
    if phis.dim() != q0path.dim() || !phis.grid().compatible(q0path.grid()) {
        return Err(Error::Incompatible(
            "transition family does not match the relaxation path".into(),
        ));
    }
    Ok(())
}

/// Solve the skeleton equation for a given control with RK4 (frozen control
/// per cell, Hermite-midpoint coefficients). Linear in the control to
/// rounding accuracy.
pub fn skeleton_map(model: &CoefficientModel, q0path: &Path, control: &Control) -> Result<Path> {
    check_pair(model, q0path)?;
    if control.dim() != model.dim() || !control.grid().compatible(q0path.grid()) {
        return Err(Error::Incompatible(
            "control does not match the relaxation path grid/dimension".into(),
        ));
    }
    let lin = linearize(model, q0path)?;
    skeleton_map_from(&lin, q0path.grid(), control)
}

pub(crate) fn skeleton_map_from(
    lin: &LinearizedCoeffs,
    grid: &TimeGrid,
    control: &Control,
) -> Result<Path> {
    let d = lin.dim();
    let n = lin.steps();
    let dt = grid.dt();
    let mut path = Path::zeros(*grid, d)?;
    let mut g = DVector::<f64>::zeros(d);
    for k in 0..n {
        let u = DVector::from_column_slice(control.value_slice(k));
        let a_lo = lin.a_node(k);
        let a_mid = lin.a_mid(k);
        let a_hi = lin.a_node(k + 1);
        let forcing_lo = lin.b_node(k) * &u;
        let forcing_mid = lin.b_mid(k) * &u;
        let forcing_hi = lin.b_node(k + 1) * &u;
        let k1 = a_lo * &g + &forcing_lo;
        let k2 = a_mid * (&g + &k1 * (dt / 2.0)) + &forcing_mid;
        let k3 = a_mid * (&g + &k2 * (dt / 2.0)) + &forcing_mid;
        let k4 = a_hi * (&g + &k3 * dt) + &forcing_hi;
        g += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!("skeleton state at step {}", k + 1)));
        }
        path.set_node(k + 1, &g);
    }
    Ok(path)
}

/// Path-space rate of a fluctuation profile `psi` with `psi(0) = 0`:
/// reconstruct the unique control through the invertible diffusion,
/// `u_k = B_k^{-1} ((psi_{k+1} - psi_k)/dt - A_k psi_k)`, and return half its
/// squared norm. `residual` reports the sup-distance between `psi` and the
/// skeleton solution driven by the reconstruction.
pub fn rate_of_path(model: &CoefficientModel, q0path: &Path, psi: &Path) -> Result<RateResult> {
    check_pair(model, q0path)?;
    if psi.dim() != model.dim() || !psi.grid().compatible(q0path.grid()) {
        return Err(Error::Incompatible(
            "fluctuation path does not match the relaxation path grid/dimension".into(),
        ));
    }
    let start = psi.start().norm();
    if start > 1e-12 * psi.sup_norm().max(1.0) {
        return Err(Error::NonzeroStart(start));
    }
    let lin = linearize(model, q0path)?;
    let d = model.dim();
    let n = q0path.grid().steps();
    let dt = q0path.grid().dt();
    let mut control = Control::zeros(*q0path.grid(), d)?;
    let mut worst_cond = 0.0f64;
    for k in 0..n {
        let b = lin.b_node(k).clone_owned();
        let b_norm = b.norm();
        let binv = match b.clone().try_inverse() {
            Some(m) => m,
            None => {
                return Err(Error::SingularDiffusion { index: k, cond: f64::INFINITY });
            }
        };
        let cond = b_norm * binv.norm();
        if !cond.is_finite() || cond > DIFFUSION_COND_MAX {
            return Err(Error::SingularDiffusion { index: k, cond });
        }
        worst_cond = worst_cond.max(cond);
        let psi_k = psi.node(k);
        let psi_next = psi.node(k + 1);
        let rhs = (psi_next - &psi_k) / dt - lin.a_node(k) * psi_k;
        control.set_value(k, &(binv * rhs));
    }
    control.ensure_finite()?;
    let rebuilt = skeleton_map_from(&lin, q0path.grid(), &control)?;
    let residual = rebuilt.sup_distance(psi)?;
    Ok(RateResult {
        rate: control.energy(),
        t_star: None,
        direction: None,
        gramian_condition: worst_cond,
        residual,
        skipped_t_stars: 0,
        optimal_control: control,
    })
}

/// Controllability Gramian in the terminal frame,
/// `Q(T) = sum_{k<n} Phi(T,t_k) B_k B_k^T Phi(T,t_k)^T dt`
/// (left-endpoint quadrature, matching the skeleton's node coefficients).
pub fn controllability_gramian(
    model: &CoefficientModel,
    q0path: &Path,
    phis: &TransitionFamily,
) -> Result<DMatrix<f64>> {
    check_pair(model, q0path)?;
    check_family(q0path, phis)?;
    let lin = linearize(model, q0path)?;
    Ok(gramian_from(&lin, phis, q0path.grid().dt()))
}

fn gramian_from(lin: &LinearizedCoeffs, phis: &TransitionFamily, dt: f64) -> DMatrix<f64> {
    let d = lin.dim();
    let mut q = DMatrix::<f64>::zeros(d, d);
    for k in 0..lin.steps() {
        let p = phis.view(k) * lin.b_node(k);
        q.gemm(dt, &p, &p.transpose(), 1.0);
    }
    q
}

struct GramianSpectrum {
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
    lambda_max: f64,
    lambda_min: f64,
}

impl GramianSpectrum {
    fn new(q: DMatrix<f64>) -> Result<Self> {
        let eigen = SymmetricEigen::new(q);
        let lambda_max = eigen.eigenvalues.max();
        let lambda_min = eigen.eigenvalues.min();
        if !(lambda_max.is_finite() && lambda_max > 0.0) {
            return Err(Error::SingularGramian(format!(
                "largest eigenvalue {lambda_max} is not positive"
            )));
        }
        Ok(GramianSpectrum { eigen, lambda_max, lambda_min })
    }

    fn condition(&self) -> f64 {
        if self.lambda_min > 0.0 {
            self.lambda_max / self.lambda_min
        } else {
            f64::INFINITY
        }
    }

    /// `Q^{-1} v` with eigenvalues floored at `GRAMIAN_FLOOR * lambda_max`:
    /// numerically unreachable directions get a large finite rate instead of
    /// garbage.
    fn solve_floored(&self, v: &DVector<f64>) -> DVector<f64> {
        let floor = GRAMIAN_FLOOR * self.lambda_max;
        let mut out = DVector::zeros(v.len());
        for j in 0..v.len() {
            let col = self.eigen.eigenvectors.column(j);
            let coeff = col.dot(v) / self.eigen.eigenvalues[j].max(floor);
            out.axpy(coeff, &col.clone_owned(), 1.0);
        }
        out
    }
}

/// Minimal rate to steer the skeleton to the point `x` at the final time:
/// `(1/2) x^T Q(T)^{-1} x` with the minimum-energy control
/// `u_k = B_k^T Phi(T,t_k)^T Q^{-1} x`. `residual` is the terminal miss of
/// the skeleton driven by that control.
pub fn terminal_rate(
    model: &CoefficientModel,
    q0path: &Path,
    phis: &TransitionFamily,
    x: &DVector<f64>,
) -> Result<RateResult> {
    check_pair(model, q0path)?;
    check_family(q0path, phis)?;
    if x.len() != model.dim() {
        return Err(Error::Incompatible(format!(
            "target dimension {} vs model dimension {}",
            x.len(),
            model.dim()
        )));
    }
    let lin = linearize(model, q0path)?;
    let grid = q0path.grid();
    let spectrum = GramianSpectrum::new(gramian_from(&lin, phis, grid.dt()))?;
    let y = spectrum.solve_floored(x);
    let rate = 0.5 * x.dot(&y);

    let mut control = Control::zeros(*grid, model.dim())?;
    for k in 0..grid.steps() {
        let z = phis.view(k).transpose() * &y;
        control.set_value(k, &(lin.b_node(k).transpose() * z));
    }
    let driven = skeleton_map_from(&lin, grid, &control)?;
    let residual = (driven.end() - x).norm();
    Ok(RateResult {
        rate,
        t_star: Some(grid.horizon()),
        direction: Some(x.as_slice().to_vec()),
        gramian_condition: spectrum.condition(),
        residual,
        skipped_t_stars: 0,
        optimal_control: control,
    })
}

/// Minimal rate to exit the centered ball of radius `delta` by the horizon:
/// minimize the hitting rate over exit times `t_j` and boundary points
/// `delta * v`, `|v| = 1`.
///
/// Uses the prefix sums `S_j = sum_{k<j} P_k P_k^T dt`, `P_k = Phi(T,t_k) B_k`:
/// since `S_j = Phi(T,t_j) Q_j Phi(T,t_j)^T` for the sub-horizon Gramian
/// `Q_j`, the hitting rate at `t_j` is
/// `(1/2) (Phi(T,t_j) x)^T S_j^{-1} (Phi(T,t_j) x)` — one `O(d^2)` update per
/// candidate instead of a Gramian rebuild. Degenerate candidates
/// (`lambda_min < 1e-14 lambda_max`) are skipped and counted.
///
/// The sphere scan is exact (`+-delta`) in d=1 and uses direction grids in
/// d=2 and d=3 (64 angles / 256 Fibonacci points by default); higher
/// dimensions are not supported.
pub fn exit_rate(
    model: &CoefficientModel,
    q0path: &Path,
    phis: &TransitionFamily,
    delta: f64,
) -> Result<RateResult> {
    let count = match model.dim() {
        2 => 64,
        _ => 256,
    };
    exit_rate_with_directions(model, q0path, phis, delta, count)
}

/// [`exit_rate`] with an explicit direction-grid resolution for d = 2, 3.
pub fn exit_rate_with_directions(
    model: &CoefficientModel,
    q0path: &Path,
    phis: &TransitionFamily,
    delta: f64,
    directions: usize,
) -> Result<RateResult> {
    check_pair(model, q0path)?;
    check_family(q0path, phis)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "exit radius must be positive, got {delta}"
        )));
    }
    let dirs = unit_directions(model.dim(), directions)?;
    let lin = linearize(model, q0path)?;
    let grid = q0path.grid();
    let d = model.dim();
    let n = grid.steps();
    let dt = grid.dt();

    let mut s = DMatrix::<f64>::zeros(d, d);
    let mut skipped = 0usize;
    let mut best: Option<(f64, usize, usize, f64)> = None; // (rate, j, dir index, cond)
    for j in 1..=n {
        let p = phis.view(j - 1) * lin.b_node(j - 1);
        s.gemm(dt, &p, &p.transpose(), 1.0);
        let eigen = SymmetricEigen::new(s.clone());
        let lmax = eigen.eigenvalues.max();
        let lmin = eigen.eigenvalues.min();
        if !(lmax.is_finite() && lmax > 0.0) || lmin < GRAMIAN_FLOOR * lmax {
            skipped += 1;
            continue;
        }
        let phi_j = phis.view(j);
        for (vi, v) in dirs.iter().enumerate() {
            let w = phi_j * (delta * v);
            // (1/2) w^T S^{-1} w through the eigenbasis.
            let mut val = 0.0;
            for c in 0..d {
                let proj = eigen.eigenvectors.column(c).dot(&w);
                val += proj * proj / eigen.eigenvalues[c];
            }
            val *= 0.5;
            if best.map_or(true, |(r, _, _, _)| val < r) {
                best = Some((val, j, vi, lmax / lmin));
            }
        }
    }
    let (rate, j_star, vi_star, cond) = best.ok_or_else(|| {
        Error::SingularGramian("every candidate exit time was numerically degenerate".into())
    })?;

    // Rebuild S_{j*} and the minimum-energy control for the winning pair.
    let mut s = DMatrix::<f64>::zeros(d, d);
    for k in 0..j_star {
        let p = phis.view(k) * lin.b_node(k);
        s.gemm(dt, &p, &p.transpose(), 1.0);
    }
    let x_star = delta * &dirs[vi_star];
    let w = phis.view(j_star) * &x_star;
    let y = GramianSpectrum::new(s)?.solve_floored(&w);
    let mut control = Control::zeros(*grid, d)?;
    for k in 0..j_star {
        let z = phis.view(k).transpose() * &y;
        control.set_value(k, &(lin.b_node(k).transpose() * z));
    }
    let driven = skeleton_map_from(&lin, grid, &control)?;
    let residual = (driven.node(j_star) - &x_star).norm();
    Ok(RateResult {
        rate,
        t_star: Some(grid.node(j_star)),
        direction: Some(x_star.as_slice().to_vec()),
        gramian_condition: cond,
        residual,
        skipped_t_stars: skipped,
        optimal_control: control,
    })
}
