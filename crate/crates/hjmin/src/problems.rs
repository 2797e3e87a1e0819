//! Constructors for the three builtin problem families and name-based
//! dispatch. Dimensions are the only free parameters; every other constant
//! is fixed so results match the reference figures.

use nalgebra::{DMatrix, DVector};

use crate::coeff::{CoefficientProvider, TimeProfile};
use crate::error::{Error, Result};
use crate::problem::{ControlProblem, ProblemData, ReferenceTrajectory};
use crate::quadratic::{Quadratic, TerminalCost};

/// Variant of the time-dependent family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDependentVariant {
    /// Scalar state, two mirrored pieces 0.5 (x +- 0.9)^2.
    OneDim,
    /// Four pieces with quadratic weight on the first two coordinates only.
    SixteenDim,
}

/// Constant-coefficient problem: l = n, A = B = M_xx = M_uu = I, M_xu = 0,
/// horizon 1, and two unit-paraboloid terminal pieces shifted by -+1 on
/// coordinates 1 and 2.
pub fn build_constant_example(n: usize) -> Result<ControlProblem> {
    if n < 2 {
        return Err(Error::Validation {
            field: "n".into(),
            message: format!("constant-coefficient family needs n >= 2, got {n}"),
        });
    }
    let eye = DMatrix::identity(n, n);
    let mut shift = DVector::zeros(n);
    shift[0] = 1.0;
    shift[1] = 1.0;
    let terminal = TerminalCost::new(vec![
        Quadratic::new(eye.clone(), shift.clone(), 1.0)?,
        Quadratic::new(eye.clone(), -shift, 1.0)?,
    ])?;
    ControlProblem::new(ProblemData {
        state_dim: n,
        control_dim: n,
        horizon: 1.0,
        a: CoefficientProvider::constant(eye.clone()),
        b: CoefficientProvider::constant(eye.clone()),
        m_xx: CoefficientProvider::constant(eye.clone()),
        m_uu: CoefficientProvider::constant(eye),
        m_xu: CoefficientProvider::constant(DMatrix::zeros(n, n)),
        terminal,
        x_ref: ReferenceTrajectory::None,
    })
}

/// Time-dependent problem: l = n, M_uu = 2 e^{-t} I, M_xx = e^{-t}/2 I,
/// A = I/2, B = I, M_xu = 0, horizon 1.
pub fn build_timedep_example(n: usize, variant: TimeDependentVariant) -> Result<ControlProblem> {
    let terminal = match variant {
        TimeDependentVariant::OneDim => {
            if n != 1 {
                return Err(Error::Validation {
                    field: "n".into(),
                    message: format!("the one-dimensional variant needs n = 1, got {n}"),
                });
            }
            let q_mat = DMatrix::from_element(1, 1, 1.0);
            TerminalCost::new(vec![
                Quadratic::new(q_mat.clone(), DVector::from_element(1, 0.9), 0.405)?,
                Quadratic::new(q_mat, DVector::from_element(1, -0.9), 0.405)?,
            ])?
        }
        TimeDependentVariant::SixteenDim => {
            if n < 2 {
                return Err(Error::Validation {
                    field: "n".into(),
                    message: format!("the four-piece variant needs n >= 2, got {n}"),
                });
            }
            // Pieces 1,2: x1^2 + x2^2 quadratic part (0.5 x^T P x with unit
            // weights on the first two coordinates); pieces 3,4 use half
            // that weight. Linear terms 0.9 on x1 resp. x2, constant 0.405.
            let mut p12 = DMatrix::zeros(n, n);
            p12[(0, 0)] = 1.0;
            p12[(1, 1)] = 1.0;
            let p34 = &p12 * 0.5;
            let mut e1 = DVector::zeros(n);
            e1[0] = 0.9;
            let mut e2 = DVector::zeros(n);
            e2[1] = 0.9;
            TerminalCost::new(vec![
                Quadratic::new(p12.clone(), e1.clone(), 0.405)?,
                Quadratic::new(p12, -e1, 0.405)?,
                Quadratic::new(p34.clone(), e2.clone(), 0.405)?,
                Quadratic::new(p34, -e2, 0.405)?,
            ])?
        }
    };
    let eye = DMatrix::identity(n, n);
    ControlProblem::new(ProblemData {
        state_dim: n,
        control_dim: n,
        horizon: 1.0,
        a: CoefficientProvider::constant(&eye * 0.5),
        b: CoefficientProvider::constant(eye.clone()),
        m_xx: CoefficientProvider::profiled(
            eye.clone(),
            TimeProfile::Exp {
                c: 0.5,
                alpha: -1.0,
            },
        ),
        m_uu: CoefficientProvider::profiled(
            eye,
            TimeProfile::Exp {
                c: 2.0,
                alpha: -1.0,
            },
        ),
        m_xu: CoefficientProvider::constant(DMatrix::zeros(n, n)),
        terminal,
        x_ref: ReferenceTrajectory::None,
    })
}

/// Double-integrator tracking problem in n = 2l dimensions: positions in
/// the first block, velocities in the second, control is the acceleration.
/// The running cost tracks x_r(t) = 5 (sin t, cos t) blockwise with control
/// weight 1/1000; the terminal pieces are (1/160) I with shifts -+2 on the
/// first position coordinate.
pub fn build_newton_example(l: usize) -> Result<ControlProblem> {
    if l == 0 {
        return Err(Error::Validation {
            field: "l".into(),
            message: "control dimension must be positive".into(),
        });
    }
    let n = 2 * l;
    // A = [[0, I], [0, 0]] (velocity drives position), B = [0; I].
    let a = DMatrix::from_fn(n, n, |i, j| if j == l + i { 1.0 } else { 0.0 });
    let b = DMatrix::from_fn(n, l, |i, j| if i == l + j { 1.0 } else { 0.0 });

    let q_mat = DMatrix::identity(n, n) / 160.0;
    let mut shift = DVector::zeros(n);
    shift[0] = 1.0 / 80.0;
    let terminal = TerminalCost::new(vec![
        Quadratic::new(q_mat.clone(), shift.clone(), 1.0 / 80.0)?,
        Quadratic::new(q_mat, -shift, 1.0 / 80.0)?,
    ])?;

    ControlProblem::new(ProblemData {
        state_dim: n,
        control_dim: l,
        horizon: 1.0,
        a: CoefficientProvider::constant(a),
        b: CoefficientProvider::constant(b),
        m_xx: CoefficientProvider::constant(DMatrix::identity(n, n)),
        m_uu: CoefficientProvider::constant(DMatrix::identity(l, l) / 1000.0),
        m_xu: CoefficientProvider::constant(DMatrix::zeros(n, l)),
        terminal,
        x_ref: ReferenceTrajectory::SinCosBlock { amplitude: 5.0 },
    })
}

/// All builtin problem names understood by [`builtin_problem`] and the CLI.
pub const BUILTIN_NAMES: [&str; 4] = ["const-16d", "tdep-1d", "tdep-16d", "newton-16d"];

/// Build a problem by builtin name, optionally overriding the dimension
/// (n, or l for the Newton family) and the horizon.
pub fn builtin_problem(
    name: &str,
    dim: Option<usize>,
    horizon: Option<f64>,
) -> Result<ControlProblem> {
    let problem = match name {
        "const-16d" => build_constant_example(dim.unwrap_or(16))?,
        "tdep-1d" => build_timedep_example(dim.unwrap_or(1), TimeDependentVariant::OneDim)?,
        "tdep-16d" => build_timedep_example(dim.unwrap_or(16), TimeDependentVariant::SixteenDim)?,
        "newton-16d" => build_newton_example(dim.unwrap_or(8))?,
        other => {
            return Err(Error::Validation {
                field: "builtin".into(),
                message: format!(
                    "unknown builtin '{other}' (expected one of {})",
                    BUILTIN_NAMES.join(", ")
                ),
            })
        }
    };
    match horizon {
        Some(t) => problem.with_horizon(t),
        None => Ok(problem),
    }
}
