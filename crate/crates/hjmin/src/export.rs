//! CSV export shared by the CLI and the verification suite.
//!
//! All numeric fields use 17 significant digits in scientific notation with
//! a '.' decimal separator, every file carries a header row, and every file
//! ends with a newline, so identical inputs produce byte-identical files.

use std::io::Write;

use crate::control::Trajectory;
use crate::error::Result;
use crate::riccati::BackwardSolution;
use crate::verify::CheckOutcome;

/// 17 significant digits, locale-independent.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// One backward-solution piece: t, vec(P) row-major, q entries, r.
pub fn write_backward_piece_csv<W: Write>(
    w: &mut W,
    solution: &BackwardSolution,
    piece: usize,
) -> Result<()> {
    let states = solution.piece_states(piece)?;
    let n = solution.problem().state_dim();

    let mut header = vec!["t".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            header.push(format!("p_{i}_{j}"));
        }
    }
    for i in 1..=n {
        header.push(format!("q_{i}"));
    }
    header.push("r".into());
    writeln!(w, "{}", header.join(","))?;

    for k in 0..solution.grid().node_count() {
        let mut row = vec![format_float(solution.grid().node(k))];
        let p = &states.p[k];
        for i in 0..n {
            for j in 0..n {
                row.push(format_float(p[(i, j)]));
            }
        }
        for i in 0..n {
            row.push(format_float(states.q[k][i]));
        }
        row.push(format_float(states.r[k]));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Value slice rows (x1, x2, value, 1-based active piece).
pub fn write_slice_csv<W: Write>(w: &mut W, rows: &[(f64, f64, f64, usize)]) -> Result<()> {
    writeln!(w, "x1,x2,value,piece")?;
    for (x1, x2, value, piece) in rows {
        writeln!(
            w,
            "{},{},{},{piece}",
            format_float(*x1),
            format_float(*x2),
            format_float(*value)
        )?;
    }
    Ok(())
}

/// Residual slice rows (x1, x2, residual).
pub fn write_residual_csv<W: Write>(w: &mut W, rows: &[(f64, f64, f64)]) -> Result<()> {
    writeln!(w, "x1,x2,residual")?;
    for (x1, x2, residual) in rows {
        writeln!(
            w,
            "{},{},{}",
            format_float(*x1),
            format_float(*x2),
            format_float(*residual)
        )?;
    }
    Ok(())
}

/// Trajectory rows: t, state components, control components.
pub fn write_trajectory_csv<W: Write>(w: &mut W, trajectory: &Trajectory) -> Result<()> {
    let n = trajectory.states[0].len();
    let l = trajectory.controls[0].len();
    let mut header = vec!["t".to_string()];
    for i in 1..=n {
        header.push(format!("x_{i}"));
    }
    for i in 1..=l {
        header.push(format!("u_{i}"));
    }
    writeln!(w, "{}", header.join(","))?;

    for k in 0..trajectory.grid.node_count() {
        let mut row = vec![format_float(trajectory.grid.node(k))];
        for i in 0..n {
            row.push(format_float(trajectory.states[k][i]));
        }
        for i in 0..l {
            row.push(format_float(trajectory.controls[k][i]));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Rollout summary rows (first coordinate of x0, piece, value, cost, gap).
pub fn write_summary_csv<W: Write>(w: &mut W, rows: &[(f64, usize, f64, f64, f64)]) -> Result<()> {
    writeln!(w, "x0,piece,value,cost,gap")?;
    for (x0, piece, value, cost, gap) in rows {
        writeln!(
            w,
            "{},{piece},{},{},{}",
            format_float(*x0),
            format_float(*value),
            format_float(*cost),
            format_float(*gap)
        )?;
    }
    Ok(())
}

/// Machine-readable verification report.
pub fn write_report_csv<W: Write>(w: &mut W, checks: &[CheckOutcome]) -> Result<()> {
    writeln!(w, "check,passed,measured,threshold,detail")?;
    for c in checks {
        writeln!(
            w,
            "{},{},{},{},\"{}\"",
            c.name,
            c.passed,
            format_float(c.measured),
            format_float(c.threshold),
            c.detail.replace('"', "'")
        )?;
    }
    Ok(())
}
