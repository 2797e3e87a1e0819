//! Solve a builtin problem, evaluate the value function, and roll out the
//! synthesized control (the README walkthrough).

use hjmin::{builtin_problem, rollout, solve_backward, value_at};
use nalgebra::DVector;

fn main() -> Result<(), hjmin::Error> {
    let problem = builtin_problem("const-16d", None, None)?;
    let solution = solve_backward(&problem, 200)?;

    let mut x0 = DVector::zeros(16);
    x0[0] = 1.5;
    let sample = value_at(&solution, 0.0, &x0)?;
    let trajectory = rollout(&solution, 0.0, &x0, 200)?;
    assert!((sample.value - trajectory.total_cost).abs() < 1e-5);
    println!(
        "V(0, x0) = {:.6}, rollout cost = {:.6}, piece {}",
        sample.value, trajectory.total_cost, trajectory.active_piece
    );
    Ok(())
}
