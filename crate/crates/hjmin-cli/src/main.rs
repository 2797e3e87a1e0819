//! Command-line front end: load and validate problems, run backward solves,
//! and emit value slices, PDE residual grids, trajectories, and verification
//! reports as CSV files.
//!
//! Exit codes: 0 success, 2 validation or configuration error, 3 numeric
//! failure (integrator blow-up), 4 verification failure.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use sha2::{Digest, Sha256};

use hjmin::config::{problem_from_str, problem_to_string};
use hjmin::export::{
    write_backward_piece_csv, write_report_csv, write_residual_csv, write_slice_csv,
    write_summary_csv, write_trajectory_csv,
};
use hjmin::problems::{builtin_problem, BUILTIN_NAMES};
use hjmin::tolerances::default_steps;
use hjmin::verify::{
    default_slice_coords, forward_steps_from, run_acceptance_checks, run_convergence_study,
    run_value_cost_sweep, slice_points, VerifyLevel,
};
use hjmin::{residual_grid, rollout, solve_backward, value_at, ControlProblem, Error};

#[derive(Parser)]
#[command(
    name = "hjmin",
    version,
    about = "Finite-horizon LQ optimal control with min-of-quadratics terminal costs",
    after_help = "Builtin problems: const-16d, tdep-1d, tdep-16d, newton-16d.\n\
                  --problem also accepts a path to a JSON problem document; the\n\
                  document may override builtin parameters, e.g.\n\
                  {\"builtin\": \"newton-16d\", \"l\": 2, \"T\": 5.0}.\n\
                  Times may be absolute (\"0.25\") or fractions of the horizon (\"0.25T\").\n\
                  SOLVER_THREADS caps worker threads (0 = all cores)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Builtin name or path to a JSON problem document.
    #[arg(long)]
    problem: String,
    /// Requested backward resolution N (grid uses 2N subintervals).
    /// Defaults to ceil(200 T).
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SliceArgs {
    /// Evaluation times, e.g. "T,0.75T,0.5T,0.25T" or absolute values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    times: Option<Vec<String>>,
    /// Slice rectangle "x1min,x1max,x2min,x2max".
    #[arg(long = "box", default_value = "-2,2,-2,2", allow_hyphen_values = true)]
    bounds: String,
    /// Points per axis.
    #[arg(long, default_value_t = 50)]
    resolution: usize,
    /// 1-based coordinate pair spanning the slice, e.g. "1,2". Defaults to
    /// "1,2", or "1,l+1" for the Newton family (position vs velocity).
    #[arg(long = "slice-coords")]
    slice_coords: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the backward final value problems and dump per-piece grids.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the value function on a two-dimensional slice per time.
    Slice {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        slice: SliceArgs,
    },
    /// Evaluate the PDE residual of each piece on a slice per time.
    Residual {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        slice: SliceArgs,
    },
    /// Roll out closed-loop trajectories from a sweep of starts.
    Rollout {
        #[command(flatten)]
        common: Common,
        /// Start time (absolute or fraction of T).
        #[arg(long, default_value = "0")]
        t0: String,
        /// First-coordinate values of the starts x0 = x e1.
        /// Defaults to 11 points on [-2, 2].
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
    },
    /// Run the verification checks and write a report.
    Verify {
        /// Optional extra problem to sweep on top of the builtin checks.
        #[arg(long)]
        problem: Option<String>,
        /// quick | full
        #[arg(long, default_value = "quick")]
        level: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("SOLVER_THREADS") {
        if let Ok(threads) = v.parse::<usize>() {
            // 0 lets the pool pick all cores.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> ExitCode {
    match e {
        Error::BlowUp { .. } => ExitCode::from(3),
        Error::CheckFailed { .. } => ExitCode::from(4),
        _ => ExitCode::from(2),
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Solve { common } => cmd_solve(&common),
        Command::Slice { common, slice } => cmd_slice(&common, &slice),
        Command::Residual { common, slice } => cmd_residual(&common, &slice),
        Command::Rollout { common, t0, x0 } => cmd_rollout(&common, &t0, x0),
        Command::Verify {
            problem,
            level,
            out,
        } => cmd_verify(problem.as_deref(), &level, &out),
    }
}

fn load_problem(reference: &str) -> Result<ControlProblem, Error> {
    if BUILTIN_NAMES.contains(&reference) {
        return builtin_problem(reference, None, None);
    }
    let text = fs::read_to_string(reference).map_err(|e| Error::Config {
        path: reference.into(),
        message: format!("cannot read problem file: {e}"),
    })?;
    problem_from_str(&text)
}

fn steps_for(common: &Common, problem: &ControlProblem) -> usize {
    common
        .steps
        .unwrap_or_else(|| default_steps(problem.horizon()))
}

/// "0.25T" means a fraction of the horizon, bare numbers are absolute.
fn parse_time(token: &str, horizon: f64) -> Result<f64, Error> {
    let trimmed = token.trim();
    let (body, scale) = match trimmed.strip_suffix('T') {
        Some(rest) => (rest, horizon),
        None => (trimmed, 1.0),
    };
    if body.is_empty() {
        return Ok(horizon);
    }
    body.parse::<f64>()
        .map(|v| v * scale)
        .map_err(|_| Error::Config {
            path: "--times".into(),
            message: format!("cannot parse time '{token}'"),
        })
}

fn time_label(token: &str) -> String {
    let cleaned: String = token
        .trim()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '+' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() {
        "t".into()
    } else {
        cleaned
    }
}

fn parse_bounds(text: &str) -> Result<[f64; 4], Error> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::Config {
            path: "--box".into(),
            message: format!("expected 4 comma-separated numbers, got '{text}'"),
        });
    }
    let mut out = [0.0; 4];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part.trim().parse::<f64>().map_err(|_| Error::Config {
            path: "--box".into(),
            message: format!("cannot parse '{part}'"),
        })?;
    }
    if out[0] >= out[1] || out[2] >= out[3] {
        return Err(Error::Config {
            path: "--box".into(),
            message: "bounds must satisfy min < max on both axes".into(),
        });
    }
    Ok(out)
}

fn parse_coords(slice: &SliceArgs, problem: &ControlProblem) -> Result<(usize, usize), Error> {
    let Some(text) = &slice.slice_coords else {
        return Ok(default_slice_coords(problem));
    };
    let parts: Vec<&str> = text.split(',').collect();
    let bad = || Error::Config {
        path: "--slice-coords".into(),
        message: format!("expected two 1-based coordinates, got '{text}'"),
    };
    if parts.len() != 2 {
        return Err(bad());
    }
    let i: usize = parts[0].trim().parse().map_err(|_| bad())?;
    let j: usize = parts[1].trim().parse().map_err(|_| bad())?;
    let n = problem.state_dim();
    if i == 0 || j == 0 || i > n || j > n || i == j {
        return Err(Error::Config {
            path: "--slice-coords".into(),
            message: format!("coordinates must be distinct and within 1..={n}"),
        });
    }
    Ok((i - 1, j - 1))
}

fn slice_times(slice: &SliceArgs, default: &[&str]) -> Vec<String> {
    match &slice.times {
        Some(ts) if !ts.is_empty() => ts.clone(),
        _ => default.iter().map(|s| s.to_string()).collect(),
    }
}

fn create_out_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))
}

fn file_writer(path: &Path) -> Result<BufWriter<fs::File>, Error> {
    let file = fs::File::create(path)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn cmd_solve(common: &Common) -> Result<ExitCode, Error> {
    let problem = load_problem(&common.problem)?;
    let steps = steps_for(common, &problem);
    create_out_dir(&common.out)?;

    let started = Instant::now();
    let solution = solve_backward(&problem, steps)?;
    let wall = started.elapsed().as_secs_f64();

    for piece in 1..=solution.piece_count() {
        let path = common.out.join(format!("piece_{piece}.csv"));
        let mut w = file_writer(&path)?;
        write_backward_piece_csv(&mut w, &solution, piece)?;
        w.flush().map_err(|e| Error::Io(e.to_string()))?;
    }

    let config_text = problem_to_string(&problem)?;
    let digest = Sha256::digest(config_text.as_bytes());
    let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let manifest = serde_json::json!({
        "problem_sha256": hash,
        "steps": steps,
        "horizon": problem.horizon(),
        "pieces": solution.piece_count(),
        "wall_time_seconds": wall,
    });
    let path = common.out.join("manifest.json");
    fs::write(
        &path,
        format!("{}\n", serde_json::to_string_pretty(&manifest).unwrap()),
    )
    .map_err(|e| Error::Io(e.to_string()))?;

    println!(
        "solved {} pieces on a {}-subinterval grid in {:.3}s -> {}",
        solution.piece_count(),
        2 * steps,
        wall,
        common.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_slice(common: &Common, slice: &SliceArgs) -> Result<ExitCode, Error> {
    let problem = load_problem(&common.problem)?;
    let steps = steps_for(common, &problem);
    let bounds = parse_bounds(&slice.bounds)?;
    let coords = parse_coords(slice, &problem)?;
    let tokens = slice_times(slice, &["T", "0.75T", "0.5T", "0.25T"]);
    create_out_dir(&common.out)?;

    let solution = solve_backward(&problem, steps)?;
    let points = slice_points(problem.state_dim(), coords, bounds, slice.resolution);
    for token in &tokens {
        let t = parse_time(token, problem.horizon())?;
        let mut rows = Vec::with_capacity(points.len());
        for (x1, x2, x) in &points {
            let sample = value_at(&solution, t, x)?;
            rows.push((*x1, *x2, sample.value, sample.active_piece));
        }
        let path = common.out.join(format!("slice_{}.csv", time_label(token)));
        let mut w = file_writer(&path)?;
        write_slice_csv(&mut w, &rows)?;
        w.flush().map_err(|e| Error::Io(e.to_string()))?;
    }
    println!(
        "wrote {} slice files ({}x{} points) -> {}",
        tokens.len(),
        slice.resolution,
        slice.resolution,
        common.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_residual(common: &Common, slice: &SliceArgs) -> Result<ExitCode, Error> {
    let problem = load_problem(&common.problem)?;
    let steps = steps_for(common, &problem);
    let bounds = parse_bounds(&slice.bounds)?;
    let coords = parse_coords(slice, &problem)?;
    let tokens = slice_times(slice, &["0.75T", "0.5T", "0.25T"]);
    create_out_dir(&common.out)?;

    let solution = solve_backward(&problem, steps)?;
    let points = slice_points(problem.state_dim(), coords, bounds, slice.resolution);
    let xs: Vec<DVector<f64>> = points.iter().map(|(_, _, x)| x.clone()).collect();
    let mut files = 0usize;
    for token in &tokens {
        let t = parse_time(token, problem.horizon())?;
        for piece in 1..=solution.piece_count() {
            let residuals = residual_grid(&solution, piece, t, &xs)?;
            let rows: Vec<(f64, f64, f64)> = points
                .iter()
                .zip(&residuals)
                .map(|((x1, x2, _), r)| (*x1, *x2, *r))
                .collect();
            let path = common
                .out
                .join(format!("residual_{}_piece{piece}.csv", time_label(token)));
            let mut w = file_writer(&path)?;
            write_residual_csv(&mut w, &rows)?;
            w.flush().map_err(|e| Error::Io(e.to_string()))?;
            files += 1;
        }
    }
    println!("wrote {files} residual files -> {}", common.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_rollout(common: &Common, t0_token: &str, x0: Option<Vec<f64>>) -> Result<ExitCode, Error> {
    let problem = load_problem(&common.problem)?;
    let steps = steps_for(common, &problem);
    let t0 = parse_time(t0_token, problem.horizon())?;
    let starts = x0.unwrap_or_else(|| (0..11).map(|k| -2.0 + 0.4 * k as f64).collect());
    create_out_dir(&common.out)?;

    let solution = solve_backward(&problem, steps)?;
    let forward_steps = forward_steps_from(&solution, t0)?;

    let mut summary = Vec::with_capacity(starts.len());
    for (j, &s) in starts.iter().enumerate() {
        let mut x0_vec = DVector::zeros(problem.state_dim());
        x0_vec[0] = s;
        let trajectory = rollout(&solution, t0, &x0_vec, forward_steps)?;
        let value = value_at(&solution, t0, &x0_vec)?.value;
        let gap = (value - trajectory.total_cost).abs();

        let path = common.out.join(format!("trajectory_{}.csv", j + 1));
        let mut w = file_writer(&path)?;
        write_trajectory_csv(&mut w, &trajectory)?;
        w.flush().map_err(|e| Error::Io(e.to_string()))?;

        summary.push((
            s,
            trajectory.active_piece,
            value,
            trajectory.total_cost,
            gap,
        ));
    }
    let mut w = file_writer(&common.out.join("summary.csv"))?;
    write_summary_csv(&mut w, &summary)?;
    w.flush().map_err(|e| Error::Io(e.to_string()))?;

    println!(
        "rolled out {} trajectories from t0 = {t0} -> {}",
        starts.len(),
        common.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(problem: Option<&str>, level: &str, out: &Path) -> Result<ExitCode, Error> {
    let level = match level {
        "quick" => VerifyLevel::Quick,
        "full" => VerifyLevel::Full,
        other => {
            return Err(Error::Config {
                path: "--level".into(),
                message: format!("expected quick or full, got '{other}'"),
            })
        }
    };
    let mut checks = run_acceptance_checks(level)?;

    // An explicitly named problem gets its own refinement and sweep checks.
    if let Some(reference) = problem {
        let extra = load_problem(reference)?;
        let steps = default_steps(extra.horizon());
        let study = run_convergence_study(&extra, &[steps / 4, steps / 2])?;
        checks.push(hjmin::CheckOutcome {
            name: format!("convergence-{reference}"),
            passed: true,
            measured: study.empirical_order,
            threshold: hjmin::tolerances::MIN_EMPIRICAL_ORDER,
            detail: format!("errors {:?}", study.rows),
        });
        let starts: Vec<DVector<f64>> = (0..5)
            .map(|k| {
                let mut x = DVector::zeros(extra.state_dim());
                x[0] = -2.0 + k as f64;
                x
            })
            .collect();
        let sweep = run_value_cost_sweep(&extra, 0.0, &starts, steps, f64::INFINITY)?;
        let threshold = hjmin::tolerances::VALUE_COST_GAP_STIFF;
        checks.push(hjmin::CheckOutcome {
            name: format!("value-cost-{reference}"),
            passed: sweep.max_gap < threshold,
            measured: sweep.max_gap,
            threshold,
            detail: format!("max gap over {} starts", sweep.rows.len()),
        });
    }

    for check in &checks {
        println!("{}", check.line());
    }
    create_out_dir(out)?;
    let mut w = file_writer(&out.join("report.csv"))?;
    write_report_csv(&mut w, &checks)?;
    w.flush().map_err(|e| Error::Io(e.to_string()))?;

    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        println!("{failed} of {} checks failed", checks.len());
        return Ok(ExitCode::from(4));
    }
    println!("all {} checks passed", checks.len());
    Ok(ExitCode::SUCCESS)
}
