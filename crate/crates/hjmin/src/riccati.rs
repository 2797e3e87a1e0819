//! Backward solves of the three final-value-problem families that define
//! the per-piece value functions:
//!
//! ```text
//! P'(t) = P^T C_pp P - P^T C_xp - C_xp^T P - C_xx          P(T) = Q_i
//! q'(t) = P^T C_pp q - C_xp^T q [+ C_xx x_r]               q(T) = a_i
//! r'(t) = 0.5 q^T C_pp q       [- 0.5 x_r^T C_xx x_r]      r(T) = b_i
//! ```
//!
//! The bracketed terms are the tracking modifications, active when the
//! problem carries a reference trajectory. The three states are integrated
//! together as one flat vector per piece so the q and r stages see stage
//! values of P, which keeps the coupled scheme fourth order.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ode::{solve_fvp_rk4_with, OdeGrid};
use crate::problem::{
    CoefficientsAt, ControlProblem, HamiltonianCoefficients, ReferenceTrajectory,
};

/// Riccati right-hand side P^T C_pp P - P^T C_xp - C_xp^T P - C_xx.
pub fn riccati_rhs(
    t: f64,
    p: &DMatrix<f64>,
    ham: &HamiltonianCoefficients,
) -> Result<DMatrix<f64>> {
    if p.nrows() != p.ncols() || p.nrows() != ham.state_dim() {
        return Err(Error::Dimension(format!(
            "Riccati state must be {0}x{0}, got {1}x{2}",
            ham.state_dim(),
            p.nrows(),
            p.ncols()
        )));
    }
    Ok(riccati_rhs_with(&ham.at(t)?, p))
}

/// Linear right-hand side P^T C_pp q - C_xp^T q, plus C_xx x_r(t) when
/// tracking.
pub fn linear_rhs(
    t: f64,
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    ham: &HamiltonianCoefficients,
    x_ref: &ReferenceTrajectory,
) -> Result<DVector<f64>> {
    let n = ham.state_dim();
    if p.nrows() != n || p.ncols() != n || q.len() != n {
        return Err(Error::Dimension(format!(
            "linear FVP state must be {0}x{0} and length {0}",
            n
        )));
    }
    let x_r = x_ref.evaluate(t, n);
    Ok(linear_rhs_with(&ham.at(t)?, p, q, x_r.as_ref()))
}

/// Scalar right-hand side 0.5 q^T C_pp q, minus 0.5 x_r^T C_xx x_r when
/// tracking.
pub fn scalar_rhs(
    t: f64,
    q: &DVector<f64>,
    ham: &HamiltonianCoefficients,
    x_ref: &ReferenceTrajectory,
) -> Result<f64> {
    let n = ham.state_dim();
    if q.len() != n {
        return Err(Error::Dimension(format!(
            "scalar FVP input must have length {n}, got {}",
            q.len()
        )));
    }
    let x_r = x_ref.evaluate(t, n);
    Ok(scalar_rhs_with(&ham.at(t)?, q, x_r.as_ref()))
}

fn riccati_rhs_with(c: &CoefficientsAt, p: &DMatrix<f64>) -> DMatrix<f64> {
    let pt = p.transpose();
    &pt * &c.c_pp * p - pt * &c.c_xp - c.c_xp.transpose() * p - &c.c_xx
}

fn linear_rhs_with(
    c: &CoefficientsAt,
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    x_r: Option<&DVector<f64>>,
) -> DVector<f64> {
    let mut out = p.transpose() * &c.c_pp * q - c.c_xp.transpose() * q;
    if let Some(x_r) = x_r {
        out += &c.c_xx * x_r;
    }
    out
}

fn scalar_rhs_with(c: &CoefficientsAt, q: &DVector<f64>, x_r: Option<&DVector<f64>>) -> f64 {
    let mut out = 0.5 * q.dot(&(&c.c_pp * q));
    if let Some(x_r) = x_r {
        out -= 0.5 * x_r.dot(&(&c.c_xx * x_r));
    }
    out
}

/// States and right-hand-side samples of one terminal piece on all nodes.
#[derive(Debug, Clone)]
pub struct PieceStates {
    pub p: Vec<DMatrix<f64>>,
    pub q: Vec<DVector<f64>>,
    pub r: Vec<f64>,
    pub dp: Vec<DMatrix<f64>>,
    pub dq: Vec<DVector<f64>>,
    pub dr: Vec<f64>,
}

/// One piece sampled at a single time.
#[derive(Debug, Clone)]
pub struct PieceSample {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub r: f64,
    pub dp: DMatrix<f64>,
    pub dq: DVector<f64>,
    pub dr: f64,
}

/// Grid-sampled backward solutions for every terminal piece, plus the data
/// they were derived from. Immutable once built; safe to share across
/// threads for concurrent sampling.
#[derive(Debug, Clone)]
pub struct BackwardSolution {
    problem: ControlProblem,
    ham: HamiltonianCoefficients,
    grid: OdeGrid,
    pub(crate) pieces: Vec<PieceStates>,
}

impl BackwardSolution {
    pub fn grid(&self) -> &OdeGrid {
        &self.grid
    }

    pub fn problem(&self) -> &ControlProblem {
        &self.problem
    }

    pub fn coefficients(&self) -> &HamiltonianCoefficients {
        &self.ham
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    /// Stored node data for a piece (1-based).
    pub fn piece_states(&self, piece: usize) -> Result<&PieceStates> {
        if piece == 0 || piece > self.pieces.len() {
            return Err(Error::PieceOutOfRange {
                piece,
                count: self.pieces.len(),
            });
        }
        Ok(&self.pieces[piece - 1])
    }

    /// (P, q, r) and their analytic time derivatives for a piece at time t.
    ///
    /// Times within a relative snap tolerance of a node return the stored
    /// values; anything else interpolates states linearly between the two
    /// neighboring nodes and recomputes the derivatives from the
    /// interpolated state. Node-exact sampling is the accuracy-critical
    /// path; interpolation only serves diagnostics.
    pub fn sample(&self, piece: usize, t: f64) -> Result<PieceSample> {
        let states = self.piece_states(piece)?;
        if let Some(k) = self.grid.locate(t) {
            return Ok(PieceSample {
                p: states.p[k].clone(),
                q: states.q[k].clone(),
                r: states.r[k],
                dp: states.dp[k].clone(),
                dq: states.dq[k].clone(),
                dr: states.dr[k],
            });
        }
        let (k, w) = self.grid.bracket(t)?;
        let p = &states.p[k] * (1.0 - w) + &states.p[k + 1] * w;
        let q = &states.q[k] * (1.0 - w) + &states.q[k + 1] * w;
        let r = states.r[k] * (1.0 - w) + states.r[k + 1] * w;
        let c = self.ham.at(t)?;
        let x_r = self.problem.reference_at(t);
        let dp = riccati_rhs_with(&c, &p);
        let dq = linear_rhs_with(&c, &p, &q, x_r.as_ref());
        let dr = scalar_rhs_with(&c, &q, x_r.as_ref());
        Ok(PieceSample {
            p,
            q,
            r,
            dp,
            dq,
            dr,
        })
    }
}

/// Integrate all terminal pieces backward from T to 0.
///
/// `steps` is the requested resolution N; the stored grid has 2N
/// subintervals so that a forward pass with step T/N finds every one of its
/// Runge-Kutta stage times on a node. After every accepted step the P block
/// is replaced by its symmetric part, which stops rounding drift from
/// accumulating over thousands of steps. Pieces are independent and are
/// solved in parallel.
pub fn solve_backward(problem: &ControlProblem, steps: usize) -> Result<BackwardSolution> {
    if steps < 2 {
        return Err(Error::Validation {
            field: "steps".into(),
            message: format!("backward solve needs at least 2 steps, got {steps}"),
        });
    }
    let ham = problem.hamiltonian_coefficients();
    let grid = OdeGrid::new(0.0, problem.horizon(), 2 * steps)?;

    let pieces: Vec<PieceStates> = problem
        .terminal()
        .pieces()
        .par_iter()
        .enumerate()
        .map(|(idx, piece)| {
            solve_piece(
                problem,
                &ham,
                &grid,
                piece.matrix(),
                piece.linear(),
                piece.constant(),
            )
            .map_err(|e| attach_piece(e, idx + 1))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BackwardSolution {
        problem: problem.clone(),
        ham,
        grid,
        pieces,
    })
}

fn attach_piece(e: Error, piece: usize) -> Error {
    match e {
        Error::BlowUp { step, t, .. } => Error::BlowUp {
            step,
            t,
            piece: Some(piece),
        },
        other => other,
    }
}

fn solve_piece(
    problem: &ControlProblem,
    ham: &HamiltonianCoefficients,
    grid: &OdeGrid,
    q_mat: &DMatrix<f64>,
    a_vec: &DVector<f64>,
    b_scalar: f64,
) -> Result<PieceStates> {
    let n = problem.state_dim();
    let z_end = flatten(q_mat, a_vec, b_scalar);

    let rhs = |t: f64, z: &DVector<f64>| -> Result<DVector<f64>> {
        let (p, q) = unflatten(z, n);
        let c = ham.at(t)?;
        let x_r = problem.reference_at(t);
        let dp = riccati_rhs_with(&c, &p);
        let dq = linear_rhs_with(&c, &p, &q, x_r.as_ref());
        let dr = scalar_rhs_with(&c, &q, x_r.as_ref());
        Ok(flatten(&dp, &dq, dr))
    };

    let solution = solve_fvp_rk4_with(
        rhs,
        &z_end,
        grid.t_start(),
        grid.t_end(),
        grid.steps(),
        |z| symmetrize_p_block(z, n),
    )?;

    let node_count = grid.node_count();
    let mut out = PieceStates {
        p: Vec::with_capacity(node_count),
        q: Vec::with_capacity(node_count),
        r: Vec::with_capacity(node_count),
        dp: Vec::with_capacity(node_count),
        dq: Vec::with_capacity(node_count),
        dr: Vec::with_capacity(node_count),
    };
    for (k, z) in solution.states.iter().enumerate() {
        let (p, q) = unflatten(z, n);
        let r = z[n * n + n];
        let t = grid.node(k);
        let c = ham.at(t)?;
        let x_r = problem.reference_at(t);
        out.dp.push(riccati_rhs_with(&c, &p));
        out.dq.push(linear_rhs_with(&c, &p, &q, x_r.as_ref()));
        out.dr.push(scalar_rhs_with(&c, &q, x_r.as_ref()));
        out.p.push(p);
        out.q.push(q);
        out.r.push(r);
    }
    Ok(out)
}

/// Flat layout: vec(P) row-major, then q, then r.
fn flatten(p: &DMatrix<f64>, q: &DVector<f64>, r: f64) -> DVector<f64> {
    let n = p.nrows();
    let mut z = DVector::zeros(n * n + n + 1);
    for i in 0..n {
        for j in 0..n {
            z[i * n + j] = p[(i, j)];
        }
    }
    for i in 0..n {
        z[n * n + i] = q[i];
    }
    z[n * n + n] = r;
    z
}

fn unflatten(z: &DVector<f64>, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let p = DMatrix::from_fn(n, n, |i, j| z[i * n + j]);
    let q = DVector::from_fn(n, |i, _| z[n * n + i]);
    (p, q)
}

fn symmetrize_p_block(z: &mut DVector<f64>, n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (z[i * n + j] + z[j * n + i]);
            z[i * n + j] = avg;
            z[j * n + i] = avg;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientProvider;
    use crate::problem::ProblemData;
    use crate::problems::{build_constant_example, build_newton_example};
    use crate::quadratic::{Quadratic, TerminalCost};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn scalar_problem(terminal_q: f64, terminal_a: f64, terminal_b: f64) -> ControlProblem {
        let one = DMatrix::from_element(1, 1, 1.0);
        ControlProblem::new(ProblemData {
            state_dim: 1,
            control_dim: 1,
            horizon: 1.0,
            a: CoefficientProvider::constant(one.clone()),
            b: CoefficientProvider::constant(one.clone()),
            m_xx: CoefficientProvider::constant(one.clone()),
            m_uu: CoefficientProvider::constant(one.clone()),
            m_xu: CoefficientProvider::constant(DMatrix::zeros(1, 1)),
            terminal: TerminalCost::new(vec![Quadratic::new(
                DMatrix::from_element(1, 1, terminal_q),
                DVector::from_element(1, terminal_a),
                terminal_b,
            )
            .unwrap()])
            .unwrap(),
            x_ref: ReferenceTrajectory::None,
        })
        .unwrap()
    }

    #[test]
    fn riccati_rhs_constant_coefficients() {
        let ham = build_constant_example(4)
            .unwrap()
            .hamiltonian_coefficients();
        let eye = DMatrix::identity(4, 4);
        // P = I: I - I - I - I = -2I, exactly.
        let rhs = riccati_rhs(0.3, &eye, &ham).unwrap();
        assert_eq!(rhs, &eye * -2.0);
        // P = (1 + sqrt 2) I is the steady state of p^2 - 2p - 1.
        let root = 1.0 + std::f64::consts::SQRT_2;
        let rhs = riccati_rhs(0.3, &(&eye * root), &ham).unwrap();
        for v in rhs.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn riccati_rhs_reduces_to_linear_case_without_control() {
        // B = 0 and A = 0 leave P' = -C_xx independent of P.
        let n = 2;
        let m_xx = DMatrix::from_row_slice(n, n, &[2.0, 0.5, 0.5, 1.0]);
        let problem = ControlProblem::new(ProblemData {
            state_dim: n,
            control_dim: n,
            horizon: 1.0,
            a: CoefficientProvider::constant(DMatrix::zeros(n, n)),
            b: CoefficientProvider::constant(DMatrix::zeros(n, n)),
            m_xx: CoefficientProvider::constant(m_xx.clone()),
            m_uu: CoefficientProvider::constant(DMatrix::identity(n, n)),
            m_xu: CoefficientProvider::constant(DMatrix::zeros(n, n)),
            terminal: TerminalCost::new(vec![Quadratic::new(
                DMatrix::identity(n, n),
                DVector::zeros(n),
                0.0,
            )
            .unwrap()])
            .unwrap(),
            x_ref: ReferenceTrajectory::None,
        })
        .unwrap();
        let ham = problem.hamiltonian_coefficients();
        let p = DMatrix::from_row_slice(n, n, &[3.0, -1.0, -1.0, 5.0]);
        assert_eq!(riccati_rhs(0.5, &p, &ham).unwrap(), -m_xx);
    }

    #[test]
    fn linear_rhs_cases() {
        let ham = build_constant_example(4)
            .unwrap()
            .hamiltonian_coefficients();
        let eye = DMatrix::identity(4, 4);
        let no_ref = ReferenceTrajectory::None;
        // q = 0 stays 0.
        let rhs = linear_rhs(0.2, &eye, &DVector::zeros(4), &ham, &no_ref).unwrap();
        assert_eq!(rhs, DVector::zeros(4));
        // P = I: q' = (P - I) q = 0 for any q.
        let mut e1 = DVector::zeros(4);
        e1[0] = 1.0;
        let rhs = linear_rhs(0.2, &eye, &e1, &ham, &no_ref).unwrap();
        assert_eq!(rhs, DVector::zeros(4));

        // Tracking adds C_xx x_r; the Newton family has C_xx = I, so at
        // t = pi/2 the source is (5, ..., 5, 0, ..., 0).
        let newton = build_newton_example(8).unwrap();
        let rhs = linear_rhs(
            std::f64::consts::FRAC_PI_2,
            &DMatrix::zeros(16, 16),
            &DVector::zeros(16),
            &newton.hamiltonian_coefficients(),
            newton.x_ref(),
        )
        .unwrap();
        for i in 0..8 {
            assert_abs_diff_eq!(rhs[i], 5.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rhs[8 + i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn scalar_rhs_cases() {
        let ham = build_constant_example(4)
            .unwrap()
            .hamiltonian_coefficients();
        let no_ref = ReferenceTrajectory::None;
        assert_eq!(
            scalar_rhs(0.1, &DVector::zeros(4), &ham, &no_ref).unwrap(),
            0.0
        );
        // C_pp = I: r' = |q|^2 / 2 = 1/2 at q = e1.
        let mut e1 = DVector::zeros(4);
        e1[0] = 1.0;
        assert_eq!(scalar_rhs(0.1, &e1, &ham, &no_ref).unwrap(), 0.5);
    }

    #[test]
    fn backward_solve_matches_scalar_closed_form() {
        let problem = scalar_problem(1.0, 0.0, 0.0);
        let solution = solve_backward(&problem, 200).unwrap();
        let expected = {
            let s = std::f64::consts::SQRT_2;
            1.0 + s * (s * 1.0f64).tanh()
        };
        assert_abs_diff_eq!(
            solution.piece_states(1).unwrap().p[0][(0, 0)],
            expected,
            epsilon = 1e-8
        );
    }

    #[test]
    fn terminal_node_is_stored_exactly() {
        let problem = build_constant_example(16).unwrap();
        let solution = solve_backward(&problem, 10).unwrap();
        let last = solution.grid().steps();
        for piece in 1..=2 {
            let states = solution.piece_states(piece).unwrap();
            let expected = problem.terminal().piece(piece).unwrap();
            assert_eq!(&states.p[last], expected.matrix());
            assert_eq!(&states.q[last], expected.linear());
            assert_eq!(states.r[last], expected.constant());
        }
        // Sampling at t = T returns the same bits.
        let sample = solution.sample(2, 1.0).unwrap();
        assert_eq!(&sample.q, problem.terminal().piece(2).unwrap().linear());
    }

    #[test]
    fn zero_linear_terminal_keeps_q_and_r_frozen() {
        // a = 0 and no tracking: q stays exactly zero, r stays exactly b.
        let problem = scalar_problem(1.0, 0.0, 0.7);
        let solution = solve_backward(&problem, 50).unwrap();
        let states = solution.piece_states(1).unwrap();
        for k in 0..solution.grid().node_count() {
            assert_eq!(states.q[k][0], 0.0);
            assert_eq!(states.r[k], 0.7);
        }
    }

    #[test]
    fn linear_terminal_scaling_is_homogeneous() {
        // Doubling a scales q by 2 bitwise (the q equation is linear and P
        // does not depend on q); with b = 0, r scales by exactly 4.
        let base = solve_backward(&scalar_problem(1.0, 0.25, 0.0), 40).unwrap();
        let scaled = solve_backward(&scalar_problem(1.0, 0.5, 0.0), 40).unwrap();
        let (b, s) = (
            base.piece_states(1).unwrap(),
            scaled.piece_states(1).unwrap(),
        );
        for k in 0..base.grid().node_count() {
            assert_eq!(s.q[k][0].to_bits(), (2.0 * b.q[k][0]).to_bits());
            assert_eq!(s.r[k].to_bits(), (4.0 * b.r[k]).to_bits());
            assert_eq!(s.p[k][(0, 0)].to_bits(), b.p[k][(0, 0)].to_bits());
        }
    }

    #[test]
    fn cached_derivatives_match_rhs_recomputation() {
        let problem = build_constant_example(3).unwrap();
        let ham = problem.hamiltonian_coefficients();
        let solution = solve_backward(&problem, 20).unwrap();
        let states = solution.piece_states(1).unwrap();
        for k in [0, 7, solution.grid().steps()] {
            let t = solution.grid().node(k);
            let dp = riccati_rhs(t, &states.p[k], &ham).unwrap();
            let dq = linear_rhs(t, &states.p[k], &states.q[k], &ham, problem.x_ref()).unwrap();
            let dr = scalar_rhs(t, &states.q[k], &ham, problem.x_ref()).unwrap();
            assert_eq!(states.dp[k], dp);
            assert_eq!(states.dq[k], dq);
            assert_eq!(states.dr[k], dr);
        }
    }

    #[test]
    fn sampling_agrees_with_ten_times_finer_solve() {
        let problem = scalar_problem(1.0, 0.0, 0.0);
        let coarse = solve_backward(&problem, 200).unwrap();
        let fine = solve_backward(&problem, 2000).unwrap();
        // t = 0.5 is a node of both grids: stored values differ only by the
        // integration error gap.
        let node_hit = coarse.sample(1, 0.5).unwrap();
        let reference = fine.sample(1, 0.5).unwrap();
        assert_abs_diff_eq!(node_hit.p[(0, 0)], reference.p[(0, 0)], epsilon = 1e-6);

        // Strictly between nodes the linear interpolation error dominates,
        // bounded by h^2 |p''| / 8 with h the half-step spacing.
        let h = coarse.grid().step_size();
        let t = 0.5 + h / 3.0;
        let interpolated = coarse.sample(1, t).unwrap();
        let reference = fine.sample(1, t).unwrap();
        assert_abs_diff_eq!(interpolated.p[(0, 0)], reference.p[(0, 0)], epsilon = h * h);
    }

    #[test]
    fn sample_rejects_out_of_range_and_bad_piece() {
        let problem = scalar_problem(1.0, 0.0, 0.0);
        let solution = solve_backward(&problem, 10).unwrap();
        assert!(matches!(
            solution.sample(1, 1.5),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(matches!(
            solution.sample(3, 0.5),
            Err(Error::PieceOutOfRange { piece: 3, count: 1 })
        ));
        assert!(matches!(
            solve_backward(&problem, 1),
            Err(Error::Validation { .. })
        ));
    }
}
