//! The deterministic relaxation limit of the damped dynamics and its
//! linearization: the flow `q0' = b(q0)/alpha(q0)` and the transition
//! matrices `Phi(T, t)` of the time-varying system `y' = A(t) y` with
//! `A(t) = D(b/alpha)(q0(t))`.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::coefficients::CoefficientModel;
use crate::error::{Error, Result};
use crate::grid::{Path, TimeGrid};

/// Classical RK4 for `q0' = b(q0)/alpha(q0)` on the grid, with cubic-order
/// midpoint stages. Errors if the damping loses positivity anywhere the
/// stages evaluate it.
pub fn solve_limit_ode(
    model: &CoefficientModel,
    q_init: &DVector<f64>,
    grid: TimeGrid,
) -> Result<Path> {
    if q_init.len() != model.dim() {
        return Err(Error::Incompatible(format!(
            "initial state dimension {} vs model dimension {}",
            q_init.len(),
            model.dim()
        )));
    }
    let dt = grid.dt();
    let mut path = Path::zeros(grid, model.dim())?;
    let mut q = q_init.clone();
    path.set_node(0, &q);
    for i in 0..grid.steps() {
        let k1 = model.drift_ratio(&q)?;
        let k2 = model.drift_ratio(&(&q + &k1 * (dt / 2.0)))?;
        let k3 = model.drift_ratio(&(&q + &k2 * (dt / 2.0)))?;
        let k4 = model.drift_ratio(&(&q + &k3 * dt))?;
        q += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !q.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!("limit flow at step {}", i + 1)));
        }
        path.set_node(i + 1, &q);
    }
    Ok(path)
}

/// Linearized coefficients along a relaxation path, sampled at grid nodes
/// and at Hermite-interpolated midpoints (what RK4 half-stages need).
///
/// `A = D(b/alpha)(q0)` and `B = sigma(q0)/alpha(q0)`, stored flat
/// (column-major `dim x dim` blocks) so multi-million-node grids stay cheap.
pub(crate) struct LinearizedCoeffs {
    dim: usize,
    steps: usize,
    a_node: Vec<f64>, // (steps+1) blocks
    b_node: Vec<f64>, // (steps+1) blocks
    a_mid: Vec<f64>,  // steps blocks
    b_mid: Vec<f64>,  // steps blocks
}

impl LinearizedCoeffs {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn block(data: &[f64], i: usize, d: usize) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&data[i * d * d..(i + 1) * d * d], d, d)
    }

    pub fn a_node(&self, i: usize) -> DMatrixView<'_, f64> {
        Self::block(&self.a_node, i, self.dim)
    }

    pub fn b_node(&self, i: usize) -> DMatrixView<'_, f64> {
        Self::block(&self.b_node, i, self.dim)
    }

    pub fn a_mid(&self, i: usize) -> DMatrixView<'_, f64> {
        Self::block(&self.a_mid, i, self.dim)
    }

    pub fn b_mid(&self, i: usize) -> DMatrixView<'_, f64> {
        Self::block(&self.b_mid, i, self.dim)
    }
}

/// Evaluate `A`, `B` along `q0path` at nodes and cell midpoints. Midpoint
/// states use cubic Hermite interpolation with derivatives `b/alpha`, so the
/// half-stage coefficients keep RK4 at full order.
pub(crate) fn linearize(
    model: &CoefficientModel,
    q0path: &Path,
) -> Result<LinearizedCoeffs> {
    let d = model.dim();
    if q0path.dim() != d {
        return Err(Error::Incompatible(format!(
            "path dimension {} vs model dimension {}",
            q0path.dim(),
            d
        )));
    }
    let n = q0path.grid().steps();
    let dt = q0path.grid().dt();
    let dd = d * d;
    let mut out = LinearizedCoeffs {
        dim: d,
        steps: n,
        a_node: vec![0.0; (n + 1) * dd],
        b_node: vec![0.0; (n + 1) * dd],
        a_mid: vec![0.0; n * dd],
        b_mid: vec![0.0; n * dd],
    };

    let eval = |x: &DVector<f64>| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let a = model.drift_ratio_jacobian(x)?;
        let alpha = model.damping_checked(x)?;
        let b = model.diffusion(x) / alpha;
        Ok((a, b))
    };

    let mut q_prev = q0path.node(0);
    let mut f_prev = model.drift_ratio(&q_prev)?;
    let (a0, b0) = eval(&q_prev)?;
    out.a_node[..dd].copy_from_slice(a0.as_slice());
    out.b_node[..dd].copy_from_slice(b0.as_slice());

    for i in 0..n {
        let q_next = q0path.node(i + 1);
        let f_next = model.drift_ratio(&q_next)?;
        let (an, bn) = eval(&q_next)?;
        out.a_node[(i + 1) * dd..(i + 2) * dd].copy_from_slice(an.as_slice());
        out.b_node[(i + 1) * dd..(i + 2) * dd].copy_from_slice(bn.as_slice());

        let q_mid = (&q_prev + &q_next) * 0.5 + (&f_prev - &f_next) * (dt / 8.0);
        let (am, bm) = eval(&q_mid)?;
        out.a_mid[i * dd..(i + 1) * dd].copy_from_slice(am.as_slice());
        out.b_mid[i * dd..(i + 1) * dd].copy_from_slice(bm.as_slice());

        q_prev = q_next;
        f_prev = f_next;
    }
    Ok(out)
}

/// Transition matrices `Phi(T, t_i)` of `y' = A(t) y` anchored at the final
/// time, one `dim x dim` block per grid node.
#[derive(Debug, Clone)]
pub struct TransitionFamily {
    grid: TimeGrid,
    dim: usize,
    data: Vec<f64>, // (steps+1) column-major blocks
}

impl TransitionFamily {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Phi(T, t_i)` as an owned matrix.
    pub fn matrix(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.dim, self.dim, self.block(i))
    }

    pub(crate) fn view(&self, i: usize) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(self.block(i), self.dim, self.dim)
    }

    fn block(&self, i: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.data[i * dd..(i + 1) * dd]
    }
}

/// Integrate `d/dt Phi(T, t) = -Phi(T, t) A(t)` backward from `Phi(T,T) = I`
/// with RK4, reusing the Hermite-midpoint linearization. `Phi(T, T)` is the
/// identity exactly.
pub fn transition_family(
    model: &CoefficientModel,
    q0path: &Path,
) -> Result<TransitionFamily> {
    let lin = linearize(model, q0path)?;
    transition_family_from(&lin, *q0path.grid())
}

pub(crate) fn transition_family_from(
    lin: &LinearizedCoeffs,
    grid: TimeGrid,
) -> Result<TransitionFamily> {
    let d = lin.dim();
    let n = lin.steps();
    let dd = d * d;
    let dt = grid.dt();
    let mut data = vec![0.0; (n + 1) * dd];

    let mut phi = DMatrix::<f64>::identity(d, d);
    data[n * dd..].copy_from_slice(phi.as_slice());
    // Backward sweep: step size -dt, derivative G(t, Phi) = -Phi A(t).
    let h = -dt;
    for i in (0..n).rev() {
        let a_hi = lin.a_node(i + 1);
        let a_mid = lin.a_mid(i);
        let a_lo = lin.a_node(i);
        let k1 = -(&phi * a_hi);
        let k2 = -((&phi + &k1 * (h / 2.0)) * a_mid);
        let k3 = -((&phi + &k2 * (h / 2.0)) * a_mid);
        let k4 = -((&phi + &k3 * h) * a_lo);
        phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !phi.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!("transition matrix at node {i}")));
        }
        data[i * dd..(i + 1) * dd].copy_from_slice(phi.as_slice());
    }
    Ok(TransitionFamily { grid, dim: d, data })
}
