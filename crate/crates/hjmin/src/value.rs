//! The min-plus value function, its gradient, and PDE-residual diagnostics.
//!
//! V(t, x) = min_i V_i(t, x) with V_i(t, x) = 0.5 x^T P_i(t) x +
//! q_i(t)^T x + r_i(t). The minimum of the per-piece solves is itself the
//! viscosity solution of the backward Hamilton-Jacobi equation
//! `-dV/dt + H(t, x, grad V) = 0` with the min-of-quadratics terminal
//! condition; the residual functions below measure how closely the grid
//! data satisfies it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{HamiltonianCoefficients, ReferenceTrajectory};
use crate::quadratic::{argmin_first, eval_quadratic};
use crate::riccati::BackwardSolution;

/// The value function at one (t, x), with per-piece detail.
#[derive(Debug, Clone)]
pub struct ValueSample {
    /// min over the pieces.
    pub value: f64,
    /// Gradient P_k(t) x + q_k(t) of the active piece.
    pub gradient: DVector<f64>,
    /// 1-based index of the smallest piece attaining the minimum.
    pub active_piece: usize,
    /// All per-piece values, in piece order.
    pub per_piece_values: Vec<f64>,
}

/// Evaluate the value function and its gradient at (t, x).
///
/// At t = T this reproduces the terminal cost exactly: the last grid node
/// stores the terminal data untouched and the evaluation path is shared
/// with [`crate::TerminalCost::evaluate`].
pub fn value_at(solution: &BackwardSolution, t: f64, x: &DVector<f64>) -> Result<ValueSample> {
    let n = solution.problem().state_dim();
    if x.len() != n {
        return Err(Error::Dimension(format!(
            "value query expects dimension {n}, got {}",
            x.len()
        )));
    }
    let m = solution.piece_count();
    let mut per_piece_values = Vec::with_capacity(m);
    let mut samples = Vec::with_capacity(m);
    for piece in 1..=m {
        let s = solution.sample(piece, t)?;
        per_piece_values.push(eval_quadratic(&s.p, &s.q, s.r, x));
        samples.push(s);
    }
    let k = argmin_first(&per_piece_values);
    let gradient = &samples[k].p * x + &samples[k].q;
    Ok(ValueSample {
        value: per_piece_values[k],
        gradient,
        active_piece: k + 1,
        per_piece_values,
    })
}

/// The Hamiltonian
/// H(t, x, p) = 0.5 p^T C_pp p - p^T C_xp x - 0.5 (x - x_r)^T C_xx (x - x_r),
/// with x_r = 0 when not tracking.
pub fn hamiltonian(
    ham: &HamiltonianCoefficients,
    x_ref: &ReferenceTrajectory,
    t: f64,
    x: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<f64> {
    let c = ham.at(t)?;
    Ok(hamiltonian_with(
        &c,
        x_ref.evaluate(t, x.len()).as_ref(),
        x,
        p,
    ))
}

pub(crate) fn hamiltonian_with(
    c: &crate::problem::CoefficientsAt,
    x_r: Option<&DVector<f64>>,
    x: &DVector<f64>,
    p: &DVector<f64>,
) -> f64 {
    let kinetic = 0.5 * p.dot(&(&c.c_pp * p));
    let cross = p.dot(&(&c.c_xp * x));
    let potential = match x_r {
        Some(x_r) => {
            let e = x - x_r;
            0.5 * e.dot(&(&c.c_xx * &e))
        }
        None => 0.5 * x.dot(&(&c.c_xx * x)),
    };
    kinetic - cross - potential
}

/// PDE residual -dV_i/dt + H(t, x, grad V_i) for one piece at a grid node,
/// over a list of spatial points.
///
/// dV_i/dt = 0.5 x^T P' x + q'^T x + r' where P', q', r' are fourth-order
/// five-point central differences of the stored node states. The node must
/// have two neighbors on each side.
pub fn residual_grid(
    solution: &BackwardSolution,
    piece: usize,
    t: f64,
    xs: &[DVector<f64>],
) -> Result<Vec<f64>> {
    let (dp, dq, dr) = stencil_derivative(solution, piece, t)?;
    residual_with_derivative(solution, piece, t, xs, &dp, &dq, dr)
}

/// Same residual with the stored analytic right-hand sides in place of the
/// finite difference. The combination cancels algebraically, so this should
/// vanish to rounding; it cross-checks the FVP right-hand sides against the
/// Hamiltonian.
pub fn residual_grid_analytic(
    solution: &BackwardSolution,
    piece: usize,
    t: f64,
    xs: &[DVector<f64>],
) -> Result<Vec<f64>> {
    let k = locate_node(solution, t)?;
    let states = solution.piece_states(piece)?;
    let (dp, dq, dr) = (states.dp[k].clone(), states.dq[k].clone(), states.dr[k]);
    residual_with_derivative(solution, piece, t, xs, &dp, &dq, dr)
}

fn residual_with_derivative(
    solution: &BackwardSolution,
    piece: usize,
    t: f64,
    xs: &[DVector<f64>],
    dp: &DMatrix<f64>,
    dq: &DVector<f64>,
    dr: f64,
) -> Result<Vec<f64>> {
    let k = locate_node(solution, t)?;
    let states = solution.piece_states(piece)?;
    let (p, q) = (&states.p[k], &states.q[k]);
    let c = solution.coefficients().at(t)?;
    let x_r = solution.problem().reference_at(t);
    let out = xs
        .iter()
        .map(|x| {
            let dv_dt = eval_quadratic(dp, dq, dr, x);
            let grad = p * x + q;
            -dv_dt + hamiltonian_with(&c, x_r.as_ref(), x, &grad)
        })
        .collect();
    Ok(out)
}

fn locate_node(solution: &BackwardSolution, t: f64) -> Result<usize> {
    solution.grid().locate(t).ok_or_else(|| {
        Error::GridMisalignment(format!(
            "residual time {t} is not a node of the stored grid"
        ))
    })
}

/// Five-point fourth-order central difference of (P, q, r) in time at a
/// node: f'(t_k) = (f_{k-2} - 8 f_{k-1} + 8 f_{k+1} - f_{k+2}) / (12 h).
fn stencil_derivative(
    solution: &BackwardSolution,
    piece: usize,
    t: f64,
) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let k = locate_node(solution, t)?;
    let last = solution.grid().steps();
    if k < 2 || k + 2 > last {
        return Err(Error::StencilOutOfBounds { node: k, last });
    }
    let states = solution.piece_states(piece)?;
    let h = solution.grid().step_size();
    let scale = 1.0 / (12.0 * h);
    let dp = (&states.p[k - 2] - &states.p[k - 1] * 8.0 + &states.p[k + 1] * 8.0
        - &states.p[k + 2])
        * scale;
    let dq = (&states.q[k - 2] - &states.q[k - 1] * 8.0 + &states.q[k + 1] * 8.0
        - &states.q[k + 2])
        * scale;
    let dr =
        (states.r[k - 2] - 8.0 * states.r[k - 1] + 8.0 * states.r[k + 1] - states.r[k + 2]) * scale;
    Ok((dp, dq, dr))
}
