//! JSON problem documents.
//!
//! Two forms are accepted: a builtin reference
//! `{"builtin": "const-16d", "n": 16, "T": 1.0}` (n/l/T optional), or a full
//! problem document:
//!
//! ```json
//! {
//!   "n": 2, "l": 2, "T": 1.0,
//!   "a":    {"base": [1.0, 0.0, 0.0, 1.0], "profile": {"kind": "constant"}},
//!   "b":    {"base": [1.0, 0.0, 0.0, 1.0], "profile": {"kind": "constant"}},
//!   "m_xx": {"base": [1.0, 0.0, 0.0, 1.0], "profile": {"kind": "constant"}},
//!   "m_uu": {"base": [1.0, 0.0, 0.0, 1.0], "profile": {"kind": "exp", "c": 2.0, "alpha": -1.0}},
//!   "m_xu": {"base": [0.0, 0.0, 0.0, 0.0], "profile": {"kind": "constant"}},
//!   "terminal": [{"p": [1.0, 0.0, 0.0, 1.0], "q": [1.0, 1.0], "r": 1.0}],
//!   "x_ref": {"mode": "none"}
//! }
//! ```
//!
//! Matrices are row-major flat arrays. Parse failures name the JSON path of
//! the offending field; assumption violations surface as validation errors
//! from problem construction, not as parse errors.

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

use crate::coeff::{CoefficientProvider, TimeProfile};
use crate::error::{Error, Result};
use crate::problem::{ControlProblem, ProblemData, ReferenceTrajectory};
use crate::problems::builtin_problem;
use crate::quadratic::{Quadratic, TerminalCost};

/// Parse a problem document from JSON text.
pub fn problem_from_str(text: &str) -> Result<ControlProblem> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Config {
        path: "$".into(),
        message: format!("invalid JSON: {e}"),
    })?;
    problem_from_json(&value)
}

/// Parse a problem document (builtin reference or full schema).
pub fn problem_from_json(value: &Value) -> Result<ControlProblem> {
    let obj = expect_object(value, "$")?;
    if obj.contains_key("builtin") {
        let name = expect_str(require(obj, "builtin", "$")?, "$.builtin")?;
        let n = optional_usize(obj, "n", "$")?;
        let l = optional_usize(obj, "l", "$")?;
        let horizon = optional_f64(obj, "T", "$")?;
        // The Newton family is parameterized by l; everything else by n.
        let dim = match name {
            "newton-16d" => l.or(n.map(|n| n / 2)),
            _ => n,
        };
        return builtin_problem(name, dim, horizon);
    }

    let n = expect_usize(require(obj, "n", "$")?, "$.n")?;
    let l = expect_usize(require(obj, "l", "$")?, "$.l")?;
    let horizon = expect_f64(require(obj, "T", "$")?, "$.T")?;

    let a = parse_coefficient(require(obj, "a", "$")?, n, n, "$.a")?;
    let b = parse_coefficient(require(obj, "b", "$")?, n, l, "$.b")?;
    let m_xx = parse_coefficient(require(obj, "m_xx", "$")?, n, n, "$.m_xx")?;
    let m_uu = parse_coefficient(require(obj, "m_uu", "$")?, l, l, "$.m_uu")?;
    let m_xu = parse_coefficient(require(obj, "m_xu", "$")?, n, l, "$.m_xu")?;

    let terminal_value = require(obj, "terminal", "$")?;
    let pieces_json = expect_array(terminal_value, "$.terminal")?;
    let mut pieces = Vec::with_capacity(pieces_json.len());
    for (i, piece) in pieces_json.iter().enumerate() {
        let path = format!("$.terminal[{i}]");
        let piece_obj = expect_object(piece, &path)?;
        let p = parse_matrix(require(piece_obj, "p", &path)?, n, n, &format!("{path}.p"))?;
        let q = parse_vector(require(piece_obj, "q", &path)?, n, &format!("{path}.q"))?;
        let r = expect_f64(require(piece_obj, "r", &path)?, &format!("{path}.r"))?;
        pieces.push(Quadratic::new(p, q, r)?);
    }
    let terminal = TerminalCost::new(pieces)?;

    let x_ref = match obj.get("x_ref") {
        None => ReferenceTrajectory::None,
        Some(v) => parse_reference(v, "$.x_ref")?,
    };

    ControlProblem::new(ProblemData {
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

/// Serialize a problem into the full schema. Fails for problems built
/// around custom coefficient callables.
pub fn problem_to_json(problem: &ControlProblem) -> Result<Value> {
    Ok(json!({
        "n": problem.state_dim(),
        "l": problem.control_dim(),
        "T": problem.horizon(),
        "a": coefficient_to_json(problem.a(), "a")?,
        "b": coefficient_to_json(problem.b(), "b")?,
        "m_xx": coefficient_to_json(problem.m_xx(), "m_xx")?,
        "m_uu": coefficient_to_json(problem.m_uu(), "m_uu")?,
        "m_xu": coefficient_to_json(problem.m_xu(), "m_xu")?,
        "terminal": problem
            .terminal()
            .pieces()
            .iter()
            .map(|piece| {
                json!({
                    "p": matrix_to_row_major(piece.matrix()),
                    "q": piece.linear().iter().copied().collect::<Vec<_>>(),
                    "r": piece.constant(),
                })
            })
            .collect::<Vec<_>>(),
        "x_ref": reference_to_json(problem.x_ref()),
    }))
}

/// Pretty JSON text of [`problem_to_json`].
pub fn problem_to_string(problem: &ControlProblem) -> Result<String> {
    let value = problem_to_json(problem)?;
    serde_json::to_string_pretty(&value).map_err(|e| Error::Io(e.to_string()))
}

fn coefficient_to_json(c: &CoefficientProvider, name: &str) -> Result<Value> {
    match c {
        CoefficientProvider::Profiled { base, profile } => Ok(json!({
            "base": matrix_to_row_major(base),
            "profile": profile_to_json(profile),
        })),
        CoefficientProvider::Custom { .. } => Err(Error::Unrepresentable(format!(
            "coefficient {name} is a custom callable"
        ))),
    }
}

fn profile_to_json(p: &TimeProfile) -> Value {
    match *p {
        TimeProfile::Constant => json!({"kind": "constant"}),
        TimeProfile::Exp { c, alpha } => json!({"kind": "exp", "c": c, "alpha": alpha}),
        TimeProfile::Sin { c, omega } => json!({"kind": "sin", "c": c, "omega": omega}),
        TimeProfile::Cos { c, omega } => json!({"kind": "cos", "c": c, "omega": omega}),
    }
}

fn reference_to_json(r: &ReferenceTrajectory) -> Value {
    match *r {
        ReferenceTrajectory::None => json!({"mode": "none"}),
        ReferenceTrajectory::SinCosBlock { amplitude } => {
            json!({"mode": "sin-cos-block", "amplitude": amplitude})
        }
    }
}

fn matrix_to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn parse_coefficient(
    value: &Value,
    rows: usize,
    cols: usize,
    path: &str,
) -> Result<CoefficientProvider> {
    let obj = expect_object(value, path)?;
    let base = parse_matrix(
        require(obj, "base", path)?,
        rows,
        cols,
        &format!("{path}.base"),
    )?;
    let profile = match obj.get("profile") {
        None => TimeProfile::Constant,
        Some(v) => parse_profile(v, &format!("{path}.profile"))?,
    };
    Ok(CoefficientProvider::profiled(base, profile))
}

fn parse_profile(value: &Value, path: &str) -> Result<TimeProfile> {
    let obj = expect_object(value, path)?;
    let kind = expect_str(require(obj, "kind", path)?, &format!("{path}.kind"))?;
    match kind {
        "constant" => Ok(TimeProfile::Constant),
        "exp" => Ok(TimeProfile::Exp {
            c: expect_f64(require(obj, "c", path)?, &format!("{path}.c"))?,
            alpha: expect_f64(require(obj, "alpha", path)?, &format!("{path}.alpha"))?,
        }),
        "sin" => Ok(TimeProfile::Sin {
            c: expect_f64(require(obj, "c", path)?, &format!("{path}.c"))?,
            omega: expect_f64(require(obj, "omega", path)?, &format!("{path}.omega"))?,
        }),
        "cos" => Ok(TimeProfile::Cos {
            c: expect_f64(require(obj, "c", path)?, &format!("{path}.c"))?,
            omega: expect_f64(require(obj, "omega", path)?, &format!("{path}.omega"))?,
        }),
        other => Err(Error::Config {
            path: format!("{path}.kind"),
            message: format!("unknown profile kind '{other}'"),
        }),
    }
}

fn parse_reference(value: &Value, path: &str) -> Result<ReferenceTrajectory> {
    let obj = expect_object(value, path)?;
    let mode = expect_str(require(obj, "mode", path)?, &format!("{path}.mode"))?;
    match mode {
        "none" => Ok(ReferenceTrajectory::None),
        "sin-cos-block" => Ok(ReferenceTrajectory::SinCosBlock {
            amplitude: expect_f64(
                require(obj, "amplitude", path)?,
                &format!("{path}.amplitude"),
            )?,
        }),
        other => Err(Error::Config {
            path: format!("{path}.mode"),
            message: format!("unknown reference mode '{other}'"),
        }),
    }
}

fn parse_matrix(value: &Value, rows: usize, cols: usize, path: &str) -> Result<DMatrix<f64>> {
    let entries = parse_float_array(value, path)?;
    if entries.len() != rows * cols {
        return Err(Error::Config {
            path: path.into(),
            message: format!(
                "expected {rows}x{cols} = {} entries (row-major), got {}",
                rows * cols,
                entries.len()
            ),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, &entries))
}

fn parse_vector(value: &Value, len: usize, path: &str) -> Result<DVector<f64>> {
    let entries = parse_float_array(value, path)?;
    if entries.len() != len {
        return Err(Error::Config {
            path: path.into(),
            message: format!("expected {len} entries, got {}", entries.len()),
        });
    }
    Ok(DVector::from_column_slice(&entries))
}

fn parse_float_array(value: &Value, path: &str) -> Result<Vec<f64>> {
    let arr = expect_array(value, path)?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| expect_f64(v, &format!("{path}[{i}]")))
        .collect()
}

fn expect_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    value.as_object().ok_or_else(|| Error::Config {
        path: path.into(),
        message: "expected an object".into(),
    })
}

fn expect_array<'a>(value: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    value.as_array().ok_or_else(|| Error::Config {
        path: path.into(),
        message: "expected an array".into(),
    })
}

fn expect_str<'a>(value: &'a Value, path: &str) -> Result<&'a str> {
    value.as_str().ok_or_else(|| Error::Config {
        path: path.into(),
        message: "expected a string".into(),
    })
}

fn expect_f64(value: &Value, path: &str) -> Result<f64> {
    value.as_f64().ok_or_else(|| Error::Config {
        path: path.into(),
        message: "expected a number".into(),
    })
}

fn expect_usize(value: &Value, path: &str) -> Result<usize> {
    value
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Error::Config {
            path: path.into(),
            message: "expected a non-negative integer".into(),
        })
}

fn require<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::Config {
        path: format!("{path}.{key}"),
        message: "missing field".into(),
    })
}

fn optional_usize(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<usize>> {
    obj.get(key)
        .map(|v| expect_usize(v, &format!("{path}.{key}")))
        .transpose()
}

fn optional_f64(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<f64>> {
    obj.get(key)
        .map(|v| expect_f64(v, &format!("{path}.{key}")))
        .transpose()
}
