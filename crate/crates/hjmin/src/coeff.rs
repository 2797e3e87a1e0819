//! Time-varying matrix coefficients.
//!
//! The config schema restricts coefficients to (constant matrix) x (scalar
//! profile from a fixed family), which covers every builtin problem while
//! staying serializable. Library users who need something else can supply an
//! arbitrary callable through [`CoefficientProvider::custom`]; such problems
//! simply cannot be written back to the schema.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar time profile multiplying a constant base matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TimeProfile {
    /// Identically 1.
    Constant,
    /// c * exp(alpha * t).
    Exp { c: f64, alpha: f64 },
    /// c * sin(omega * t).
    Sin { c: f64, omega: f64 },
    /// c * cos(omega * t).
    Cos { c: f64, omega: f64 },
}

impl TimeProfile {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::Exp { c, alpha } => c * (alpha * t).exp(),
            TimeProfile::Sin { c, omega } => c * (omega * t).sin(),
            TimeProfile::Cos { c, omega } => c * (omega * t).cos(),
        }
    }
}

type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// A matrix-valued coefficient evaluable at any time in the horizon.
#[derive(Clone)]
pub enum CoefficientProvider {
    /// profile(t) * base.
    Profiled {
        base: DMatrix<f64>,
        profile: TimeProfile,
    },
    /// Arbitrary callable; not representable in the config schema.
    Custom {
        rows: usize,
        cols: usize,
        eval: MatrixFn,
    },
}

impl CoefficientProvider {
    /// Constant-in-time coefficient.
    pub fn constant(base: DMatrix<f64>) -> Self {
        Self::Profiled {
            base,
            profile: TimeProfile::Constant,
        }
    }

    pub fn profiled(base: DMatrix<f64>, profile: TimeProfile) -> Self {
        Self::Profiled { base, profile }
    }

    /// Wrap an arbitrary evaluable. The callable must return `rows x cols`
    /// matrices for every t in the horizon.
    pub fn custom<F>(rows: usize, cols: usize, eval: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::Custom {
            rows,
            cols,
            eval: Arc::new(eval),
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Self::Profiled { base, .. } => base.nrows(),
            Self::Custom { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Self::Profiled { base, .. } => base.ncols(),
            Self::Custom { cols, .. } => *cols,
        }
    }

    pub fn evaluate(&self, t: f64) -> DMatrix<f64> {
        match self {
            Self::Profiled { base, profile } => base * profile.value(t),
            Self::Custom { eval, .. } => eval(t),
        }
    }

    /// True when the coefficient is known to vanish for all t. Conservative
    /// for custom callables.
    pub fn is_identically_zero(&self) -> bool {
        match self {
            Self::Profiled { base, profile } => {
                let zero_profile = matches!(
                    profile,
                    TimeProfile::Exp { c, .. }
                    | TimeProfile::Sin { c, .. }
                    | TimeProfile::Cos { c, .. } if *c == 0.0
                );
                zero_profile || base.iter().all(|&v| v == 0.0)
            }
            Self::Custom { .. } => false,
        }
    }

    pub(crate) fn expect_shape(&self, rows: usize, cols: usize, name: &str) -> Result<()> {
        if self.rows() != rows || self.cols() != cols {
            return Err(Error::Validation {
                field: name.into(),
                message: format!(
                    "expected {}x{} coefficient, got {}x{}",
                    rows,
                    cols,
                    self.rows(),
                    self.cols()
                ),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for CoefficientProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Profiled { base, profile } => f
                .debug_struct("Profiled")
                .field("base", base)
                .field("profile", profile)
                .finish(),
            Self::Custom { rows, cols, .. } => f
                .debug_struct("Custom")
                .field("rows", rows)
                .field("cols", cols)
                .finish_non_exhaustive(),
        }
    }
}

impl PartialEq for CoefficientProvider {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                Self::Profiled {
                    base: b1,
                    profile: p1,
                },
                Self::Profiled {
                    base: b2,
                    profile: p2,
                },
            ) => b1 == b2 && p1 == p2,
            // Callables have no useful notion of equality.
            _ => false,
        }
    }
}
