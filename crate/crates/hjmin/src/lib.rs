//! Finite-horizon linear-quadratic optimal control with terminal costs that
//! are minima of finitely many quadratics.
//!
//! For each terminal quadratic the value function stays quadratic in space,
//! with coefficients (P_i(t), q_i(t), r_i(t)) solving backward matrix
//! Riccati, linear, and scalar final value problems. The value function of
//! the full problem is the pointwise minimum of the per-piece quadratics --
//! the solution operator is linear over the min-plus semiring -- and it is
//! the viscosity solution of the backward Hamilton-Jacobi equation
//! -dV/dt + H(t, x, grad V) = 0 with the min-of-quadratics terminal
//! condition. Optimal feedback controls come from the gradient of the piece
//! selected at the initial condition.
//!
//! The crate provides:
//!
//! - problem construction and validation ([`ControlProblem`], builders in
//!   [`problems`], a JSON schema in [`config`]);
//! - a fixed-step fourth-order Runge-Kutta engine for backward and forward
//!   integration ([`ode`]);
//! - the backward solves ([`riccati`]), value function and PDE residual
//!   diagnostics ([`value`]), and control synthesis with independent cost
//!   evaluation ([`control`]);
//! - a verification suite with closed-form oracles and acceptance checks
//!   ([`verify`]), CSV export ([`export`]), and centralized tolerances
//!   ([`tolerances`]).
//!
//! ```
//! use hjmin::{builtin_problem, solve_backward, value_at, select_piece};
//! use nalgebra::DVector;
//!
//! let problem = builtin_problem("tdep-1d", None, None)?;
//! let solution = solve_backward(&problem, 50)?;
//!
//! // At the horizon the value function is the terminal cost itself.
//! let x = DVector::from_element(1, 0.9);
//! let at_horizon = value_at(&solution, problem.horizon(), &x)?;
//! assert_eq!(at_horizon.value, 0.0);
//! assert_eq!(select_piece(&solution, problem.horizon(), &x)?, 2);
//!
//! // Earlier in time the two mirrored pieces still tie at the origin.
//! let sample = value_at(&solution, 0.25, &DVector::zeros(1))?;
//! assert_eq!(sample.active_piece, 1);
//! assert_eq!(sample.per_piece_values[0], sample.per_piece_values[1]);
//! # Ok::<(), hjmin::Error>(())
//! ```

pub mod coeff;
pub mod config;
pub mod control;
pub mod error;
pub mod export;
pub mod ode;
pub mod problem;
pub mod problems;
pub mod quadratic;
pub mod riccati;
pub mod tolerances;
pub mod value;
pub mod verify;

pub use coeff::{CoefficientProvider, TimeProfile};
pub use control::{evaluate_cost, feedback, rollout, select_piece, Trajectory};
pub use error::{Error, Result};
pub use ode::{solve_fvp_rk4, solve_ivp_rk4, OdeGrid, OdeSolution};
pub use problem::{ControlProblem, HamiltonianCoefficients, ProblemData, ReferenceTrajectory};
pub use problems::{
    build_constant_example, build_newton_example, build_timedep_example, builtin_problem,
    TimeDependentVariant,
};
pub use quadratic::{Quadratic, TerminalCost};
pub use riccati::{solve_backward, BackwardSolution};
pub use value::{hamiltonian, residual_grid, value_at, ValueSample};
pub use verify::{CheckOutcome, VerifyLevel};
