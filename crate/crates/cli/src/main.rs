use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use steplab::experiments::{run, write_outputs, ExperimentError, ExperimentSpec, Method};
use steplab::midpoint::{SearchConfig, SearchGrid};

#[derive(Debug, Parser)]
#[command(name = "steplab", version, about = "Step-size, filter and midpoint experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Out {
    /// Output directory for CSV files and manifest.json
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Maximum LSD step size per grid size (m = 31, 63, 127, 255)
    Table1 {
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        #[command(flatten)]
        out: Out,
    },
    /// SD, LSD, Nesterov and CG traces on one Poisson problem
    Compare {
        #[arg(long, default_value_t = 63)]
        m: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        /// Nesterov momentum
        #[arg(long, default_value_t = 0.95)]
        beta: f64,
        #[command(flatten)]
        out: Out,
    },
    /// Exponential and Tikhonov filter curves
    FilterCurves {
        /// Artificial end time of the exponential filter
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Tikhonov parameter
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 10.0)]
        s_max: f64,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[command(flatten)]
        out: Out,
    },
    /// Floquet scan of the rotating Jordan family for midpoint instability
    MidpointSearch {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[command(flatten)]
        out: Out,
    },
    /// One descent run with a full trace
    Descent {
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 63)]
        m: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 200_000)]
        max_iter: usize,
        /// Nesterov momentum
        #[arg(long, default_value_t = 0.95)]
        beta: f64,
        /// Constant step, required by --method gd
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        out: Out,
    },
    /// Reference CG solution of the Poisson problem
    Solve {
        #[arg(long, default_value_t = 63)]
        m: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        out: Out,
    },
}

struct Usage(String);

fn positive(flag: &str, v: f64) -> Result<(), Usage> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Usage(format!("{flag} must be positive and finite, got {v}")))
    }
}

fn at_least_one(flag: &str, v: usize) -> Result<(), Usage> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Usage(format!("{flag} must be at least 1")))
    }
}

fn momentum(v: f64) -> Result<(), Usage> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Usage(format!("--beta must satisfy 0 <= beta < 1, got {v}")))
    }
}

/// Validates flags and returns the spec, the canonical argument list and the output directory.
fn resolve(cmd: Command) -> Result<(ExperimentSpec, Vec<String>, PathBuf), Usage> {
    let s = |v: &dyn ToString| v.to_string();
    Ok(match cmd {
        Command::Table1 { tol, max_iter, out } => {
            positive("--tol", tol)?;
            at_least_one("--max-iter", max_iter)?;
            let ExperimentSpec::Table1 { m_values, .. } = ExperimentSpec::table1() else { unreachable!() };
            let argv = vec!["table1".into(), "--tol".into(), s(&tol), "--max-iter".into(), s(&max_iter)];
            (ExperimentSpec::Table1 { m_values, tol, max_iter }, argv, out.out)
        }
        Command::Compare { m, tol, max_iter, beta, out } => {
            at_least_one("--m", m)?;
            positive("--tol", tol)?;
            at_least_one("--max-iter", max_iter)?;
            momentum(beta)?;
            let ExperimentSpec::FigCompare { methods, .. } = ExperimentSpec::fig_compare() else { unreachable!() };
            let argv = vec![
                "compare".into(),
                "--m".into(),
                s(&m),
                "--tol".into(),
                s(&tol),
                "--max-iter".into(),
                s(&max_iter),
                "--beta".into(),
                s(&beta),
            ];
            (ExperimentSpec::FigCompare { m, tol, max_iter, beta, methods }, argv, out.out)
        }
        Command::FilterCurves { t, beta, s_max, points, out } => {
            positive("--t", t)?;
            positive("--beta", beta)?;
            positive("--s-max", s_max)?;
            if points < 2 {
                return Err(Usage("--points must be at least 2".into()));
            }
            let argv = vec![
                "filter-curves".into(),
                "--t".into(),
                s(&t),
                "--beta".into(),
                s(&beta),
                "--s-max".into(),
                s(&s_max),
                "--points".into(),
                s(&points),
            ];
            (ExperimentSpec::FigFilter { t, beta, s_max, points }, argv, out.out)
        }
        Command::MidpointSearch { gamma, out } => {
            positive("--gamma", gamma)?;
            let argv = vec!["midpoint-search".into(), "--gamma".into(), s(&gamma)];
            (ExperimentSpec::MidpointSearch { gamma, grid: SearchGrid::default(), config: SearchConfig::default() }, argv, out.out)
        }
        Command::Descent { method, m, tol, max_iter, beta, alpha, out } => {
            at_least_one("--m", m)?;
            positive("--tol", tol)?;
            at_least_one("--max-iter", max_iter)?;
            momentum(beta)?;
            match (method, alpha) {
                (Method::Gd, None) => return Err(Usage("--alpha is required with --method gd".into())),
                (_, Some(a)) => positive("--alpha", a)?,
                _ => {}
            }
            let mut argv = vec![
                "descent".into(),
                "--method".into(),
                s(&method),
                "--m".into(),
                s(&m),
                "--tol".into(),
                s(&tol),
                "--max-iter".into(),
                s(&max_iter),
                "--beta".into(),
                s(&beta),
            ];
            if let Some(a) = alpha {
                argv.extend(["--alpha".into(), s(&a)]);
            }
            (ExperimentSpec::Descent { m, method, tol, max_iter, beta, alpha }, argv, out.out)
        }
        Command::Solve { m, tol, out } => {
            at_least_one("--m", m)?;
            positive("--tol", tol)?;
            let argv = vec!["solve".into(), "--m".into(), s(&m), "--tol".into(), s(&tol)];
            (ExperimentSpec::Solve { m, tol }, argv, out.out)
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (spec, argv, out) = match resolve(cli.command) {
        Ok(r) => r,
        Err(Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let output = match run(&spec) {
        Ok(o) => o,
        Err(e @ ExperimentError::InvalidSpec { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("error: experiment {} failed: {e}", spec.name());
            return ExitCode::from(2);
        }
    };
    if let Err(e) = write_outputs(&out, &spec, &argv, &output) {
        eprintln!("error: experiment {}: {e}", spec.name());
        return ExitCode::from(2);
    }
    println!("{}", output.summary);
    ExitCode::SUCCESS
}
