//! Quadratic functions of the state and terminal costs built from them.
//!
//! A `Quadratic` is the triple (P, q, r) representing
//! x -> 0.5 x^T P x + q^T x + r. It stores both the pieces of a terminal
//! cost and time slices of the per-piece value functions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tolerances::PSD_EIGENVALUE_FLOOR;

/// Evaluate 0.5 x^T P x + q^T x + r.
///
/// Shared by [`Quadratic::eval`] and the value-function path so that the
/// terminal condition reproduces the terminal cost bit for bit.
pub(crate) fn eval_quadratic(p: &DMatrix<f64>, q: &DVector<f64>, r: f64, x: &DVector<f64>) -> f64 {
    0.5 * x.dot(&(p * x)) + q.dot(x) + r
}

/// Index of the smallest entry, first occurrence winning ties (0-based).
pub(crate) fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// A quadratic function 0.5 x^T P x + q^T x + r with P kept exactly
/// symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    p: DMatrix<f64>,
    q: DVector<f64>,
    r: f64,
}

impl Quadratic {
    /// Build a quadratic, symmetrizing P. Fails if P is not square or q has
    /// a different dimension.
    pub fn new(p: DMatrix<f64>, q: DVector<f64>, r: f64) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(Error::Dimension(format!(
                "quadratic matrix must be square, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if p.nrows() != q.len() {
            return Err(Error::Dimension(format!(
                "quadratic matrix is {0}x{0} but the linear term has length {1}",
                p.nrows(),
                q.len()
            )));
        }
        Ok(Self {
            p: symmetrize(&p),
            q,
            r,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn constant(&self) -> f64 {
        self.r
    }

    /// 0.5 x^T P x + q^T x + r.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        eval_quadratic(&self.p, &self.q, self.r, x)
    }

    /// Gradient P x + q.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p * x + &self.q
    }
}

/// (P + P^T) / 2 with exact symmetry in the result.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = m.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

/// Largest absolute asymmetry |M - M^T| entry.
pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// A terminal cost: the pointwise minimum of finitely many quadratics, each
/// with a positive semi-definite matrix part.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCost {
    pieces: Vec<Quadratic>,
}

impl TerminalCost {
    /// Validates that there is at least one piece, that all pieces share one
    /// dimension, and that every matrix part is positive semi-definite
    /// (smallest eigenvalue at least [`PSD_EIGENVALUE_FLOOR`]).
    pub fn new(pieces: Vec<Quadratic>) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(Error::Validation {
                field: "terminal".into(),
                message: "terminal cost needs at least one quadratic piece".into(),
            });
        };
        let n = first.dim();
        for (i, piece) in pieces.iter().enumerate() {
            if piece.dim() != n {
                return Err(Error::Dimension(format!(
                    "terminal piece {} has dimension {} but piece 1 has {}",
                    i + 1,
                    piece.dim(),
                    n
                )));
            }
            let min_eig = smallest_eigenvalue(piece.matrix());
            if min_eig < PSD_EIGENVALUE_FLOOR {
                return Err(Error::NotPositiveSemiDefinite {
                    piece: i + 1,
                    min_eigenvalue: min_eig,
                });
            }
        }
        Ok(Self { pieces })
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    /// Number of quadratic pieces m.
    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn pieces(&self) -> &[Quadratic] {
        &self.pieces
    }

    /// Piece by 1-based index.
    pub fn piece(&self, piece: usize) -> Result<&Quadratic> {
        if piece == 0 || piece > self.pieces.len() {
            return Err(Error::PieceOutOfRange {
                piece,
                count: self.pieces.len(),
            });
        }
        Ok(&self.pieces[piece - 1])
    }

    /// Minimum over the pieces together with the 1-based index of the
    /// smallest piece attaining it.
    pub fn evaluate(&self, x: &DVector<f64>) -> Result<(f64, usize)> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "terminal cost expects dimension {}, got {}",
                self.dim(),
                x.len()
            )));
        }
        let values: Vec<f64> = self.pieces.iter().map(|p| p.eval(x)).collect();
        let k = argmin_first(&values);
        Ok((values[k], k + 1))
    }
}

fn smallest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}
