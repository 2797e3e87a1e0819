//! Every numeric threshold used by construction-time validation and by the
//! verification suites, in one place with its derivation. Tests and the CLI
//! `verify` command reference these constants instead of inlining numbers.

/// Floor on the smallest eigenvalue accepted when checking that a terminal
/// quadratic is positive semi-definite. Terminal matrices come from user
/// input with rounding, so exact zero eigenvalues may show up slightly
/// negative; anything below this is treated as genuinely indefinite.
pub const PSD_EIGENVALUE_FLOOR: f64 = -1e-10;

/// Maximum relative asymmetry tolerated in user-supplied coefficient
/// matrices that must be symmetric (M_xx, M_uu). Scaled by the largest
/// entry magnitude.
pub const SYMMETRY_REL: f64 = 1e-12;

/// Required symmetry of the derived C_pp(t) = B M_uu^{-1} B^T after
/// symmetrization, in max norm. The factorization-based solve leaves
/// asymmetry at rounding level; symmetrizing makes it exact, so this bound
/// only guards against a broken solve path.
pub const DERIVED_COEFF_SYMMETRY: f64 = 1e-12;

/// Relative tolerance for snapping a query time onto a grid node: times
/// within `step * NODE_SNAP_REL` of a node use the stored state instead of
/// interpolating.
pub const NODE_SNAP_REL: f64 = 1e-9;

/// Self-check bound for the closed-form scalar Riccati solution
/// p(t) = 1 + sqrt(2) tanh(sqrt(2) (T - t)): substituting it into
/// dp/dt = p^2 - 2p - 1 must leave at most this defect at every sampled
/// time. Analytically the defect is zero; rounding leaves ~1e-15.
pub const ORACLE_SELF_CHECK: f64 = 1e-12;

/// Accuracy of the backward solve against the scalar closed form at t = 0
/// with 200 requested steps over a unit horizon. Fourth-order error at the
/// resulting 1/400 step is ~1e-11; 1e-8 leaves two orders of headroom.
pub const SCALAR_RICCATI_ABS: f64 = 1e-8;

/// Window for the error ratio between step counts N and 2N of a fourth
/// order method. The asymptotic ratio is 16; moderate N and rounding move
/// it a few units either way.
pub const ORDER4_RATIO_LO: f64 = 12.0;
pub const ORDER4_RATIO_HI: f64 = 20.0;

/// Wider ratio window used for the Newton-mechanics family, whose
/// C_pp carries a 1000x scale and makes pre-asymptotic wobble larger.
pub const ORDER4_STIFF_RATIO_LO: f64 = 10.0;
pub const ORDER4_STIFF_RATIO_HI: f64 = 22.0;

/// Minimum acceptable empirical convergence order in refinement studies
/// against a fine-grid reference.
pub const MIN_EMPIRICAL_ORDER: f64 = 3.7;

/// Bound on the PDE residual -dV_i/dt + H(t, x, grad V_i) measured with a
/// fourth-order five-point time stencil on the constant-coefficient
/// 16-dimensional problem, 200 requested steps, |x1|,|x2| <= 2.
pub const RESIDUAL_BOUND: f64 = 1e-6;

/// Residual bound when the stored grid is overwritten with an exact
/// solution sampled at the nodes: only the finite-difference truncation
/// remains.
pub const RESIDUAL_EXACT_INJECTION: f64 = 1e-8;

/// Residual bound when the finite-difference time derivative is replaced by
/// the stored analytic right-hand sides: the combination cancels
/// algebraically, so only rounding survives.
pub const RESIDUAL_ANALYTIC_IDENTITY: f64 = 1e-12;

/// Agreement between the value function and the rolled-out closed-loop cost
/// at 200 steps per unit horizon, |x0| <= 2. Both are fourth-order
/// accurate; the gap is bounded by a modest multiple of dt^4.
pub const VALUE_COST_GAP: f64 = 1e-5;

/// Same gap bound for the Newton-mechanics family (1000x C_pp scale).
pub const VALUE_COST_GAP_STIFF: f64 = 1e-4;

/// Slack allowed when checking that perturbed controls never beat the
/// synthesized control: cost(perturbed) >= cost(synthesized) - this.
pub const OPTIMALITY_SLACK: f64 = 1e-6;

/// Re-evaluating the rollout's own sampled controls through the
/// independent cost functional (with linear interpolation between nodes)
/// must agree with the rollout total to this bound.
pub const COST_SELF_CONSISTENCY: f64 = 5e-6;

/// Pointwise agreement required between the min over a combined terminal
/// cost and the min of separately solved single-piece problems. The two
/// paths perform identical per-piece arithmetic, so only the final min
/// differs; machine-level agreement is expected.
pub const MIN_PLUS_ABS: f64 = 1e-12;

/// Mirror symmetry of the value function under x -> -x for the builtin
/// families whose terminal pieces swap under the flip.
pub const MIRROR_SYMMETRY_ABS: f64 = 1e-10;

/// Relative agreement between the reported value gradient and a central
/// finite difference with step `GRADIENT_FD_STEP`, away from piece
/// switches. The value is quadratic in x, so the central difference is
/// exact up to rounding amplified by 1/step.
pub const GRADIENT_REL: f64 = 1e-6;
pub const GRADIENT_FD_STEP: f64 = 1e-5;

/// Round-trip defect allowed when integrating backward and then forward
/// with the same grid on the smooth test problems.
pub const ROUND_TRIP_ABS: f64 = 1e-10;

/// Default requested step count per unit horizon: 200 steps for T = 1,
/// scaled proportionally. Reproduces the sub-1e-6 residual scale with
/// margin.
pub fn default_steps(horizon: f64) -> usize {
    (200.0 * horizon).ceil() as usize
}
