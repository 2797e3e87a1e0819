//! Fixed-step fourth-order Runge-Kutta over flat state vectors, backward
//! for final value problems and forward for Cauchy problems.
//!
//! The backward sweep starts from z(T) = z_T and applies, for
//! k = N, N-1, ..., 1,
//!
//! ```text
//! d1 = -dt g(t_k, z_k)          w1 = z_k + d1/2
//! d2 = -dt g(t_k - dt/2, w1)    w2 = z_k + d2/2
//! d3 = -dt g(t_k - dt/2, w2)    w3 = z_k + d3
//! d4 = -dt g(t_k - dt, w3)
//! z_{k-1} = z_k + d1/6 + d2/3 + d3/3 + d4/6
//! ```
//!
//! The forward sweep mirrors this with positive dt. Node times are always
//! computed as t0 + k*dt from the integer index, never by accumulation, so
//! backward and forward grids over the same span are bitwise identical.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::tolerances::NODE_SNAP_REL;

/// A uniform time mesh with assigned endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeGrid {
    t_start: f64,
    t_end: f64,
    steps: usize,
}

impl OdeGrid {
    pub fn new(t_start: f64, t_end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Validation {
                field: "steps".into(),
                message: "grid needs at least one step".into(),
            });
        }
        if !(t_start.is_finite() && t_end.is_finite() && t_start < t_end) {
            return Err(Error::Validation {
                field: "grid".into(),
                message: format!("need t_start < t_end, got [{t_start}, {t_end}]"),
            });
        }
        Ok(Self {
            t_start,
            t_end,
            steps,
        })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of subintervals N.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, N + 1.
    pub fn node_count(&self) -> usize {
        self.steps + 1
    }

    pub fn step_size(&self) -> f64 {
        (self.t_end - self.t_start) / self.steps as f64
    }

    /// t_k. Endpoints are returned exactly as given.
    pub fn node(&self, k: usize) -> f64 {
        if k == 0 {
            self.t_start
        } else if k == self.steps {
            self.t_end
        } else {
            self.t_start + k as f64 * self.step_size()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.node_count()).map(|k| self.node(k)).collect()
    }

    /// Index of the node within `step * NODE_SNAP_REL` of t, if any.
    pub fn locate(&self, t: f64) -> Option<usize> {
        let dt = self.step_size();
        let k = ((t - self.t_start) / dt).round();
        if !(0.0..=(self.steps as f64)).contains(&k) {
            return None;
        }
        let k = k as usize;
        ((t - self.node(k)).abs() <= dt * NODE_SNAP_REL).then_some(k)
    }

    /// Bracketing interval and interpolation weight for an interior time:
    /// returns (k, w) with t between nodes k and k+1 and w in [0, 1].
    pub fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        if t < self.t_start || t > self.t_end {
            return Err(Error::TimeOutOfRange {
                t,
                t_start: self.t_start,
                t_end: self.t_end,
            });
        }
        let dt = self.step_size();
        let k = (((t - self.t_start) / dt).floor() as usize).min(self.steps - 1);
        let w = (t - self.node(k)) / dt;
        Ok((k, w.clamp(0.0, 1.0)))
    }
}

/// States on all nodes of a grid, forward-indexed: `states[k] = z(node(k))`.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub grid: OdeGrid,
    pub states: Vec<DVector<f64>>,
}

impl OdeSolution {
    /// State at the first node.
    pub fn first(&self) -> &DVector<f64> {
        &self.states[0]
    }

    /// State at the last node.
    pub fn last(&self) -> &DVector<f64> {
        &self.states[self.steps()]
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }
}

/// Solve the final value problem z' = g(t, z), z(t_end) = z_end backward to
/// t_start, storing every node.
pub fn solve_fvp_rk4<G>(
    mut rhs: G,
    z_end: &DVector<f64>,
    t_start: f64,
    t_end: f64,
    steps: usize,
) -> Result<OdeSolution>
where
    G: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    solve_fvp_rk4_with(&mut rhs, z_end, t_start, t_end, steps, |_| {})
}

/// Backward solve with a hook applied to each newly accepted state. The hook
/// sees the flat vector only; callers use it to re-impose structure (for
/// example symmetry of an embedded matrix block) without the integrator
/// knowing about it.
pub fn solve_fvp_rk4_with<G, H>(
    mut rhs: G,
    z_end: &DVector<f64>,
    t_start: f64,
    t_end: f64,
    steps: usize,
    mut post_step: H,
) -> Result<OdeSolution>
where
    G: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    H: FnMut(&mut DVector<f64>),
{
    let grid = OdeGrid::new(t_start, t_end, steps)?;
    let dt = grid.step_size();
    let dim = z_end.len();
    let mut states = vec![DVector::zeros(dim); grid.node_count()];
    states[steps] = z_end.clone();

    for k in (1..=steps).rev() {
        let t_k = grid.node(k);
        let z_k = &states[k];

        let d1 = rhs(t_k, z_k)? * (-dt);
        let w1 = z_k + &d1 * 0.5;
        let d2 = rhs(t_k - 0.5 * dt, &w1)? * (-dt);
        let w2 = z_k + &d2 * 0.5;
        let d3 = rhs(t_k - 0.5 * dt, &w2)? * (-dt);
        let w3 = z_k + &d3;
        let d4 = rhs(grid.node(k - 1), &w3)? * (-dt);

        let mut next = z_k + d1 / 6.0 + d2 / 3.0 + d3 / 3.0 + d4 / 6.0;
        post_step(&mut next);
        ensure_finite(&next, k - 1, grid.node(k - 1))?;
        states[k - 1] = next;
    }

    Ok(OdeSolution { grid, states })
}

/// Solve the Cauchy problem z' = g(t, z), z(t_start) = z_start forward to
/// t_end, storing every node.
pub fn solve_ivp_rk4<G>(
    mut rhs: G,
    z_start: &DVector<f64>,
    t_start: f64,
    t_end: f64,
    steps: usize,
) -> Result<OdeSolution>
where
    G: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let grid = OdeGrid::new(t_start, t_end, steps)?;
    let dt = grid.step_size();
    let dim = z_start.len();
    let mut states = vec![DVector::zeros(dim); grid.node_count()];
    states[0] = z_start.clone();

    for k in 0..steps {
        let t_k = grid.node(k);
        let z_k = &states[k];

        let d1 = rhs(t_k, z_k)? * dt;
        let w1 = z_k + &d1 * 0.5;
        let d2 = rhs(t_k + 0.5 * dt, &w1)? * dt;
        let w2 = z_k + &d2 * 0.5;
        let d3 = rhs(t_k + 0.5 * dt, &w2)? * dt;
        let w3 = z_k + &d3;
        let d4 = rhs(grid.node(k + 1), &w3)? * dt;

        let next = z_k + d1 / 6.0 + d2 / 3.0 + d3 / 3.0 + d4 / 6.0;
        ensure_finite(&next, k + 1, grid.node(k + 1))?;
        states[k + 1] = next;
    }

    Ok(OdeSolution { grid, states })
}

/// Max-norm error at t_start against a reference value, for each step count.
/// Supports empirical order checks: a fourth-order method roughly divides
/// the error by 16 when the step count doubles.
pub fn convergence_order<G>(
    mut rhs: G,
    z_end: &DVector<f64>,
    t_start: f64,
    t_end: f64,
    reference: &DVector<f64>,
    step_counts: &[usize],
) -> Result<Vec<(usize, f64)>>
where
    G: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let mut rows = Vec::with_capacity(step_counts.len());
    for &steps in step_counts {
        let solution = solve_fvp_rk4(&mut rhs, z_end, t_start, t_end, steps)?;
        let err = (solution.first() - reference)
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        rows.push((steps, err));
    }
    Ok(rows)
}

fn ensure_finite(z: &DVector<f64>, step: usize, t: f64) -> Result<()> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::BlowUp {
            step,
            t,
            piece: None,
        })
    }
}
