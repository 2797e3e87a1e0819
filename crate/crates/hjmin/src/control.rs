//! Feedback control synthesis, closed-loop rollouts, and independent cost
//! evaluation.
//!
//! The feedback law for a fixed piece k is
//!
//! ```text
//! u(t, x) = -M_uu(t)^{-1} (B(t)^T P_k(t) x + B(t)^T q_k(t) + M_xu(t)^T x)
//! ```
//!
//! where k is chosen once, at the initial condition, as the smallest index
//! minimizing V_i(t0, x0), and is never re-selected along the trajectory.
//! The closed-loop dynamics simplify to
//! x' = (C_xp - C_pp P_k) x - C_pp q_k, which is what the rollout
//! integrates, with the running cost carried as one extra state so the
//! reported cost is fourth-order accurate too.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::ode::{solve_ivp_rk4, OdeGrid};
use crate::riccati::BackwardSolution;
use crate::value::value_at;

/// A closed-loop trajectory with its cost breakdown.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: OdeGrid,
    /// x(t_j) at every node.
    pub states: Vec<DVector<f64>>,
    /// u(t_j) = feedback(t_j, x(t_j)) for the fixed active piece.
    pub controls: Vec<DVector<f64>>,
    /// Integral of the running cost along the trajectory.
    pub accumulated_cost: f64,
    /// Terminal quadratic of the active piece evaluated at x(T).
    pub terminal_cost: f64,
    /// Full min-over-pieces terminal cost at x(T), reported alongside.
    pub terminal_cost_min: f64,
    /// accumulated_cost + terminal_cost.
    pub total_cost: f64,
    /// 1-based piece frozen at (t0, x0).
    pub active_piece: usize,
}

/// Smallest 1-based index minimizing V_i(t0, x0).
pub fn select_piece(solution: &BackwardSolution, t0: f64, x0: &DVector<f64>) -> Result<usize> {
    Ok(value_at(solution, t0, x0)?.active_piece)
}

/// Feedback control for a fixed piece at (t, x). The M_uu solve goes
/// through its Cholesky factor, never an explicit inverse.
pub fn feedback(
    solution: &BackwardSolution,
    piece: usize,
    t: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let sample = solution.sample(piece, t)?;
    feedback_from_gains(solution, &sample.p, &sample.q, t, x)
}

fn feedback_from_gains(
    solution: &BackwardSolution,
    p: &nalgebra::DMatrix<f64>,
    q: &DVector<f64>,
    t: f64,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let problem = solution.problem();
    if x.len() != problem.state_dim() {
        return Err(Error::Dimension(format!(
            "feedback expects dimension {}, got {}",
            problem.state_dim(),
            x.len()
        )));
    }
    let b_t = problem.b().evaluate(t).transpose();
    let mut rhs = &b_t * (p * x + q);
    let m_xu = problem.m_xu().evaluate(t);
    rhs += m_xu.transpose() * x;
    let chol = problem.m_uu_cholesky(t)?;
    Ok(-chol.solve(&rhs))
}

/// Roll the closed loop forward from (t0, x0) over `steps` uniform steps.
///
/// t0 must land on a node of the backward grid and the forward half-steps
/// must subdivide it, so every Runge-Kutta stage samples stored node data
/// with no interpolation. With the backward solve at resolution N over
/// [0, T], the natural choice from t0 = 0 is the same N.
pub fn rollout(
    solution: &BackwardSolution,
    t0: f64,
    x0: &DVector<f64>,
    steps: usize,
) -> Result<Trajectory> {
    let problem = solution.problem();
    let horizon = problem.horizon();
    let n = problem.state_dim();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "rollout expects dimension {n}, got {}",
            x0.len()
        )));
    }
    if steps == 0 {
        return Err(Error::Validation {
            field: "steps".into(),
            message: "rollout needs at least one step".into(),
        });
    }
    let Some(node0) = solution.grid().locate(t0) else {
        return Err(Error::GridMisalignment(format!(
            "rollout start {t0} is not a node of the backward grid"
        )));
    };
    if t0 >= horizon {
        return Err(Error::TimeOutOfRange {
            t: t0,
            t_start: 0.0,
            t_end: horizon,
        });
    }
    // Every stage time is t0 + i * dt/2; these land on backward nodes
    // exactly when 2*steps divides the half-step span.
    let span = solution.grid().steps() - node0;
    if !span.is_multiple_of(2 * steps) {
        return Err(Error::GridMisalignment(format!(
            "{steps} forward steps over [{t0}, {horizon}] do not align with \
             the backward grid ({span} half-steps remaining)"
        )));
    }

    let piece = select_piece(solution, t0, x0)?;

    // Augmented state [x; running cost].
    let mut z0 = DVector::zeros(n + 1);
    z0.rows_mut(0, n).copy_from(x0);

    let rhs = |s: f64, z: &DVector<f64>| -> Result<DVector<f64>> {
        let x = z.rows(0, n).into_owned();
        let sample = solution.sample(piece, s)?;
        let c = solution.coefficients().at(s)?;
        let x_dot = (&c.c_xp - &c.c_pp * &sample.p) * &x - &c.c_pp * &sample.q;
        let u = feedback_from_gains(solution, &sample.p, &sample.q, s, &x)?;
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n).copy_from(&x_dot);
        out[n] = problem.running_cost(s, &x, &u);
        Ok(out)
    };

    let augmented = solve_ivp_rk4(rhs, &z0, t0, horizon, steps)?;

    let states: Vec<DVector<f64>> = augmented
        .states
        .iter()
        .map(|z| z.rows(0, n).into_owned())
        .collect();
    let mut controls = Vec::with_capacity(states.len());
    for (j, x) in states.iter().enumerate() {
        controls.push(feedback(solution, piece, augmented.grid.node(j), x)?);
    }

    let terminal_state = &states[steps];
    let terminal_cost = problem.terminal().piece(piece)?.eval(terminal_state);
    let (terminal_cost_min, _) = problem.terminal().evaluate(terminal_state)?;
    let accumulated_cost = augmented.states[steps][n];

    Ok(Trajectory {
        grid: augmented.grid,
        states,
        controls,
        accumulated_cost,
        terminal_cost,
        terminal_cost_min,
        total_cost: accumulated_cost + terminal_cost,
        active_piece: piece,
    })
}

/// Evaluate the cost functional for an arbitrary sampled control: integrate
/// x' = A(s) x + B(s) u(s) forward under the control (linearly interpolated
/// between its nodes), accumulate the running cost, and add the full
/// min-over-pieces terminal cost.
///
/// This path shares nothing with [`rollout`] beyond the integrator: it uses
/// the raw dynamics instead of the simplified closed-loop form, so agreement
/// between the two is a genuine cross-check.
pub fn evaluate_cost(
    problem: &crate::problem::ControlProblem,
    t0: f64,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    steps: usize,
) -> Result<f64> {
    let n = problem.state_dim();
    let l = problem.control_dim();
    let horizon = problem.horizon();
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "cost evaluation expects dimension {n}, got {}",
            x0.len()
        )));
    }
    if controls.len() != steps + 1 {
        return Err(Error::Dimension(format!(
            "need {} control samples for {steps} steps, got {}",
            steps + 1,
            controls.len()
        )));
    }
    if controls.iter().any(|u| u.len() != l) {
        return Err(Error::Dimension(format!(
            "control samples must have length {l}"
        )));
    }
    let grid = OdeGrid::new(t0, horizon, steps)?;
    let dt = grid.step_size();

    let control_at = |s: f64| -> DVector<f64> {
        let k = (((s - t0) / dt).floor() as usize).min(steps - 1);
        let w = ((s - grid.node(k)) / dt).clamp(0.0, 1.0);
        &controls[k] * (1.0 - w) + &controls[k + 1] * w
    };

    let mut z0 = DVector::zeros(n + 1);
    z0.rows_mut(0, n).copy_from(x0);

    let rhs = |s: f64, z: &DVector<f64>| -> Result<DVector<f64>> {
        let x = z.rows(0, n).into_owned();
        let u = control_at(s);
        let x_dot = problem.a().evaluate(s) * &x + problem.b().evaluate(s) * &u;
        let mut out = DVector::zeros(n + 1);
        out.rows_mut(0, n).copy_from(&x_dot);
        out[n] = problem.running_cost(s, &x, &u);
        Ok(out)
    };

    let solution = solve_ivp_rk4(rhs, &z0, t0, horizon, steps)?;
    let terminal_state = solution.last().rows(0, n).into_owned();
    let (terminal, _) = problem.terminal().evaluate(&terminal_state)?;
    Ok(solution.last()[n] + terminal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_constant_example, build_newton_example};
    use crate::riccati::solve_backward;
    use crate::tolerances::COST_SELF_CONSISTENCY;
    use crate::verify::scalar_constant_problem;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_feedback_at_terminal_time() {
        // B = M_uu = 1, M_xu = 0, P(T) = 1, q = 0: u = -(P x + q) = -1 at x = 1.
        let problem = scalar_constant_problem();
        let solution = solve_backward(&problem, 10).unwrap();
        let u = feedback(&solution, 1, 1.0, &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(u[0], -1.0);
    }

    #[test]
    fn feedback_vanishes_at_origin_without_linear_term() {
        let problem = scalar_constant_problem();
        let solution = solve_backward(&problem, 10).unwrap();
        let u = feedback(&solution, 1, 0.25, &DVector::zeros(1)).unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn newton_feedback_cancels_at_shifted_minimum() {
        // Piece 2 has P(T) = I/160, q = -(1/80) e1; at x = 2 e1 the gain
        // input P x + q vanishes exactly (1/160 scales by 2 to 1/80).
        let problem = build_newton_example(8).unwrap();
        let solution = solve_backward(&problem, 50).unwrap();
        let mut x = DVector::zeros(16);
        x[0] = 2.0;
        let u = feedback(&solution, 2, 1.0, &x).unwrap();
        assert_eq!(u, DVector::zeros(8));
    }

    #[test]
    fn piece_selection_examples() {
        let problem = build_constant_example(16).unwrap();
        let solution = solve_backward(&problem, 10).unwrap();
        let mut x = DVector::zeros(16);
        x[0] = -1.0;
        x[1] = -1.0;
        // First piece vanishes at (-1, -1, 0, ...).
        assert_eq!(select_piece(&solution, 1.0, &x).unwrap(), 1);
        // Exact tie at the origin resolves to the smallest index.
        assert_eq!(
            select_piece(&solution, 1.0, &DVector::zeros(16)).unwrap(),
            1
        );

        let single = scalar_constant_problem();
        let solution = solve_backward(&single, 10).unwrap();
        assert_eq!(
            select_piece(&solution, 0.5, &DVector::from_element(1, 3.0)).unwrap(),
            1
        );
    }

    #[test]
    fn origin_is_a_fixed_point_of_the_homogeneous_loop() {
        let problem = scalar_constant_problem();
        let solution = solve_backward(&problem, 50).unwrap();
        let trajectory = rollout(&solution, 0.0, &DVector::zeros(1), 50).unwrap();
        for (x, u) in trajectory.states.iter().zip(&trajectory.controls) {
            assert_eq!(x[0], 0.0);
            assert_eq!(u[0], 0.0);
        }
        assert_eq!(trajectory.accumulated_cost, 0.0);
        assert_eq!(trajectory.total_cost, 0.0);
        // Terminal bookkeeping is definitionally consistent.
        let terminal_piece = problem
            .terminal()
            .piece(trajectory.active_piece)
            .unwrap()
            .eval(&trajectory.states[50]);
        assert_eq!(trajectory.terminal_cost.to_bits(), terminal_piece.to_bits());
        assert_eq!(
            trajectory.total_cost,
            trajectory.accumulated_cost + trajectory.terminal_cost
        );
    }

    #[test]
    fn rollout_cost_matches_value() {
        let problem = scalar_constant_problem();
        let solution = solve_backward(&problem, 200).unwrap();
        let x0 = DVector::from_element(1, 1.0);
        let trajectory = rollout(&solution, 0.0, &x0, 200).unwrap();
        let value = crate::value::value_at(&solution, 0.0, &x0).unwrap().value;
        assert_abs_diff_eq!(trajectory.total_cost, value, epsilon = 1e-6);
    }

    #[test]
    fn recorded_controls_equal_feedback_at_nodes() {
        let problem = build_constant_example(4).unwrap();
        let solution = solve_backward(&problem, 25).unwrap();
        let mut x0 = DVector::zeros(4);
        x0[0] = 1.5;
        let trajectory = rollout(&solution, 0.0, &x0, 25).unwrap();
        assert_eq!(
            trajectory.active_piece,
            select_piece(&solution, 0.0, &x0).unwrap()
        );
        for j in [0usize, 10, 25] {
            let expected = feedback(
                &solution,
                trajectory.active_piece,
                trajectory.grid.node(j),
                &trajectory.states[j],
            )
            .unwrap();
            assert_eq!(trajectory.controls[j], expected);
        }
    }

    #[test]
    fn closed_loop_is_linear_in_the_start_for_zero_linear_terms() {
        let problem = scalar_constant_problem();
        let solution = solve_backward(&problem, 50).unwrap();
        let t1 = rollout(&solution, 0.0, &DVector::from_element(1, 0.5), 50).unwrap();
        let t2 = rollout(&solution, 0.0, &DVector::from_element(1, 1.0), 50).unwrap();
        // q = 0 pieces make the loop linear: doubling x0 doubles the state
        // path bitwise.
        for (a, b) in t1.states.iter().zip(&t2.states) {
            assert_eq!((2.0 * a[0]).to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn independent_cost_path_agrees_with_rollout() {
        let problem = build_constant_example(4).unwrap();
        let solution = solve_backward(&problem, 200).unwrap();
        let mut x0 = DVector::zeros(4);
        x0[0] = -1.2;
        let trajectory = rollout(&solution, 0.0, &x0, 200).unwrap();
        let replayed = evaluate_cost(&problem, 0.0, &x0, &trajectory.controls, 200).unwrap();
        assert_abs_diff_eq!(
            replayed,
            trajectory.total_cost,
            epsilon = COST_SELF_CONSISTENCY
        );
    }

    #[test]
    fn zero_control_from_origin_pays_the_constant_terminal() {
        let problem = scalar_constant_problem();
        let controls = vec![DVector::zeros(1); 51];
        let cost = evaluate_cost(&problem, 0.0, &DVector::zeros(1), &controls, 50).unwrap();
        // a = 0, b = 0: sitting still is free and the terminal charges b.
        assert_eq!(cost, 0.0);
    }

    #[test]
    fn misaligned_rollouts_are_rejected() {
        let problem = scalar_constant_problem();
        let solution = solve_backward(&problem, 50).unwrap();
        let x0 = DVector::from_element(1, 1.0);
        // t0 off the backward grid.
        assert!(matches!(
            rollout(&solution, 0.013, &x0, 50),
            Err(Error::GridMisalignment(_))
        ));
        // Step count whose stage times fall between backward nodes.
        assert!(matches!(
            rollout(&solution, 0.0, &x0, 60),
            Err(Error::GridMisalignment(_))
        ));
        // Coarser aligned counts are fine: 50 half-steps per forward step.
        assert!(rollout(&solution, 0.0, &x0, 2).is_ok());
        // Starting at the horizon is rejected.
        assert!(matches!(
            rollout(&solution, 1.0, &x0, 1),
            Err(Error::TimeOutOfRange { .. })
        ));
    }
}
