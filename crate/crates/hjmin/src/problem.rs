//! Problem data and the coefficients of the associated Hamiltonian.
//!
//! A [`ControlProblem`] collects the dynamics x' = A(t) x + B(t) u, the
//! running cost 0.5 x^T M_xx x + 0.5 u^T M_uu u + x^T M_xu u, a terminal
//! cost that is a minimum of quadratics, and an optional reference
//! trajectory for tracking. Construction validates dimensions and the
//! definiteness assumptions once; everything downstream relies on them.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientProvider;
use crate::error::{Error, Result};
use crate::quadratic::{max_asymmetry, symmetrize, TerminalCost};
use crate::tolerances::SYMMETRY_REL;

/// Reference trajectory x_r for tracking problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ReferenceTrajectory {
    /// No tracking; the running cost penalizes x directly.
    None,
    /// First n/2 entries amplitude*sin(t), last n/2 entries amplitude*cos(t).
    SinCosBlock { amplitude: f64 },
}

impl ReferenceTrajectory {
    pub fn is_tracking(&self) -> bool {
        !matches!(self, ReferenceTrajectory::None)
    }

    /// x_r(t) in dimension n, or `None` when not tracking.
    pub fn evaluate(&self, t: f64, n: usize) -> Option<DVector<f64>> {
        match *self {
            ReferenceTrajectory::None => None,
            ReferenceTrajectory::SinCosBlock { amplitude } => {
                let half = n / 2;
                let (s, c) = (amplitude * t.sin(), amplitude * t.cos());
                let mut out = DVector::zeros(n);
                for i in 0..half {
                    out[i] = s;
                    out[half + i] = c;
                }
                Some(out)
            }
        }
    }
}

/// All data of one finite-horizon problem. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    state_dim: usize,
    control_dim: usize,
    horizon: f64,
    a: CoefficientProvider,
    b: CoefficientProvider,
    m_xx: CoefficientProvider,
    m_uu: CoefficientProvider,
    m_xu: CoefficientProvider,
    terminal: TerminalCost,
    x_ref: ReferenceTrajectory,
}

/// Construction input for [`ControlProblem::new`].
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub state_dim: usize,
    pub control_dim: usize,
    pub horizon: f64,
    pub a: CoefficientProvider,
    pub b: CoefficientProvider,
    pub m_xx: CoefficientProvider,
    pub m_uu: CoefficientProvider,
    pub m_xu: CoefficientProvider,
    pub terminal: TerminalCost,
    pub x_ref: ReferenceTrajectory,
}

impl ControlProblem {
    /// Validate and freeze problem data.
    ///
    /// Checks dimensions across all coefficients and terminal pieces, that
    /// M_uu(t) and M_xx(t) are symmetric positive definite at t in
    /// {0, T/2, T}, and that tracking problems have M_xu identically zero
    /// (the modified final value problems are only derived for that case).
    pub fn new(data: ProblemData) -> Result<Self> {
        let ProblemData {
            state_dim: n,
            control_dim: l,
            horizon,
            a,
            b,
            m_xx,
            m_uu,
            m_xu,
            terminal,
            x_ref,
        } = data;

        if n == 0 || l == 0 {
            return Err(Error::Validation {
                field: "dimensions".into(),
                message: format!("state and control dimensions must be positive (n={n}, l={l})"),
            });
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Validation {
                field: "T".into(),
                message: format!("horizon must be finite and positive, got {horizon}"),
            });
        }
        a.expect_shape(n, n, "a")?;
        b.expect_shape(n, l, "b")?;
        m_xx.expect_shape(n, n, "m_xx")?;
        m_uu.expect_shape(l, l, "m_uu")?;
        m_xu.expect_shape(n, l, "m_xu")?;
        if terminal.dim() != n {
            return Err(Error::Validation {
                field: "terminal".into(),
                message: format!(
                    "terminal pieces have dimension {}, problem has n = {}",
                    terminal.dim(),
                    n
                ),
            });
        }

        for &t in &[0.0, 0.5 * horizon, horizon] {
            check_spd(&m_uu.evaluate(t), "m_uu", t)?;
            check_spd(&m_xx.evaluate(t), "m_xx", t)?;
        }

        if x_ref.is_tracking() {
            if !m_xu.is_identically_zero() {
                return Err(Error::Validation {
                    field: "m_xu".into(),
                    message: "tracking problems require M_xu identically zero".into(),
                });
            }
            if n != 2 * l {
                return Err(Error::Validation {
                    field: "x_ref".into(),
                    message: format!("sin-cos-block reference needs n = 2l, got n = {n}, l = {l}"),
                });
            }
        }

        Ok(Self {
            state_dim: n,
            control_dim: l,
            horizon,
            a,
            b,
            m_xx,
            m_uu,
            m_xu,
            terminal,
            x_ref,
        })
    }

    /// Same problem over a different horizon, revalidated.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        let mut data = self.to_data();
        data.horizon = horizon;
        Self::new(data)
    }

    fn to_data(&self) -> ProblemData {
        ProblemData {
            state_dim: self.state_dim,
            control_dim: self.control_dim,
            horizon: self.horizon,
            a: self.a.clone(),
            b: self.b.clone(),
            m_xx: self.m_xx.clone(),
            m_uu: self.m_uu.clone(),
            m_xu: self.m_xu.clone(),
            terminal: self.terminal.clone(),
            x_ref: self.x_ref,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn a(&self) -> &CoefficientProvider {
        &self.a
    }

    pub fn b(&self) -> &CoefficientProvider {
        &self.b
    }

    pub fn m_xx(&self) -> &CoefficientProvider {
        &self.m_xx
    }

    pub fn m_uu(&self) -> &CoefficientProvider {
        &self.m_uu
    }

    pub fn m_xu(&self) -> &CoefficientProvider {
        &self.m_xu
    }

    pub fn terminal(&self) -> &TerminalCost {
        &self.terminal
    }

    pub fn x_ref(&self) -> &ReferenceTrajectory {
        &self.x_ref
    }

    /// x_r(t), or `None` when the problem does not track a reference.
    pub fn reference_at(&self, t: f64) -> Option<DVector<f64>> {
        self.x_ref.evaluate(t, self.state_dim)
    }

    /// Derive the Hamiltonian coefficients
    ///   C_pp(t) = B M_uu^{-1} B^T,
    ///   C_xx(t) = M_xx - M_xu M_uu^{-1} M_xu^T,
    ///   C_xp(t) = A - B M_uu^{-1} M_xu^T.
    pub fn hamiltonian_coefficients(&self) -> HamiltonianCoefficients {
        HamiltonianCoefficients {
            state_dim: self.state_dim,
            a: self.a.clone(),
            b: self.b.clone(),
            m_xx: self.m_xx.clone(),
            m_uu: self.m_uu.clone(),
            m_xu: self.m_xu.clone(),
        }
    }

    /// Factor M_uu(t) for feedback solves.
    pub(crate) fn m_uu_cholesky(&self, t: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        cholesky_named(&self.m_uu.evaluate(t), "m_uu", t)
    }

    /// Running cost L(t, x, u). Tracking problems penalize the deviation
    /// from the reference instead of the raw state.
    pub fn running_cost(&self, t: f64, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let m_uu = self.m_uu.evaluate(t);
        let control_term = 0.5 * u.dot(&(&m_uu * u));
        let m_xx = self.m_xx.evaluate(t);
        match self.reference_at(t) {
            Some(x_r) => {
                let e = x - x_r;
                0.5 * e.dot(&(&m_xx * &e)) + control_term
            }
            Option::None => {
                let m_xu = self.m_xu.evaluate(t);
                0.5 * x.dot(&(&m_xx * x)) + control_term + x.dot(&(&m_xu * u))
            }
        }
    }
}

/// The three evaluable coefficients of the quadratic Hamiltonian
/// H(t, x, p) = 0.5 p^T C_pp p - p^T C_xp x - 0.5 x^T C_xx x.
#[derive(Debug, Clone)]
pub struct HamiltonianCoefficients {
    state_dim: usize,
    a: CoefficientProvider,
    b: CoefficientProvider,
    m_xx: CoefficientProvider,
    m_uu: CoefficientProvider,
    m_xu: CoefficientProvider,
}

/// All three Hamiltonian coefficients evaluated at one time.
#[derive(Debug, Clone)]
pub struct CoefficientsAt {
    pub c_pp: DMatrix<f64>,
    pub c_xx: DMatrix<f64>,
    pub c_xp: DMatrix<f64>,
}

impl HamiltonianCoefficients {
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Evaluate all three coefficients at t. M_uu^{-1} is applied through a
    /// Cholesky solve, never an explicit inverse; C_pp and C_xx come out
    /// symmetrized.
    pub fn at(&self, t: f64) -> Result<CoefficientsAt> {
        let m_uu = self.m_uu.evaluate(t);
        let chol = cholesky_named(&m_uu, "m_uu", t)?;

        let b = self.b.evaluate(t);
        let bt = b.transpose();
        // C_pp = B (M_uu^{-1} B^T)
        let c_pp = symmetrize(&(&b * chol.solve(&bt)));

        let m_xu = self.m_xu.evaluate(t);
        // Y = M_uu^{-1} M_xu^T, shared between C_xx and C_xp.
        let y = chol.solve(&m_xu.transpose());
        let c_xx = symmetrize(&(self.m_xx.evaluate(t) - &m_xu * &y));
        let c_xp = self.a.evaluate(t) - b * y;

        Ok(CoefficientsAt { c_pp, c_xx, c_xp })
    }

    pub fn c_pp(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.at(t)?.c_pp)
    }

    pub fn c_xx(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.at(t)?.c_xx)
    }

    pub fn c_xp(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.at(t)?.c_xp)
    }
}

fn check_spd(m: &DMatrix<f64>, name: &str, t: f64) -> Result<()> {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max_asymmetry(m) > SYMMETRY_REL * scale.max(1.0) {
        return Err(Error::Validation {
            field: name.into(),
            message: format!("{name}({t}) is not symmetric"),
        });
    }
    cholesky_named(m, name, t).map(|_| ())
}

fn cholesky_named(m: &DMatrix<f64>, name: &str, t: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite {
        name: name.into(),
        t,
    })
}
