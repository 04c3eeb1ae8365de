//! Fixed experiment configurations, their CSV outputs and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::descent::{
    conjugate_gradient, fmt17, gradient_descent, nesterov, DescentError, IterationTrace, RunConfig, StepPolicy, Termination,
};
use crate::filters::{filter_curves, filter_curves_csv, sample_grid, FilterError};
use crate::midpoint::{instability_search, MidpointError, RotatingJordan, SearchConfig, SearchGrid};
use crate::operators::{laplacian_2d, solve_reference, GridSpec, Laplacian2d, OperatorError, QuadraticObjective};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TABLE1_HEADER: &str = "xi,m,h,bound,ratio,iterations";
pub const STEPSIZES_HEADER: &str = "k,alpha,bound";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{experiment}: {message}")]
    Numerical { experiment: String, message: String },
    #[error("{experiment}: invalid configuration: {message}")]
    InvalidSpec { experiment: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: malformed manifest: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
}

impl ExperimentError {
    fn numerical(experiment: &str, err: impl std::fmt::Display) -> Self {
        Self::Numerical { experiment: experiment.into(), message: err.to_string() }
    }

    fn invalid(experiment: &str, message: impl Into<String>) -> Self {
        Self::InvalidSpec { experiment: experiment.into(), message: message.into() }
    }

    /// Failure of the numerics rather than of the configuration or the file system.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Self::Numerical { .. })
    }
}

/// Iteration selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Sd,
    Lsd,
    Asd,
    Nesterov,
    Cg,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Gd, Method::Sd, Method::Lsd, Method::Asd, Method::Nesterov, Method::Cg];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Sd => "sd",
            Method::Lsd => "lsd",
            Method::Asd => "asd",
            Method::Nesterov => "nesterov",
            Method::Cg => "cg",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method '{s}' (expected one of gd, sd, lsd, asd, nesterov, cg)"))
    }
}

/// A fully specified run. Equal specs give byte-identical outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Table1 { m_values: Vec<usize>, tol: f64, max_iter: usize },
    FigStepsizes { m: usize, tol: f64, max_iter: usize },
    FigLsdErrors { m: usize, tol: f64, max_iter: usize },
    FigCompare { m: usize, tol: f64, max_iter: usize, beta: f64, methods: Vec<Method> },
    FigFilter { t: f64, beta: f64, s_max: f64, points: usize },
    MidpointSearch { gamma: f64, grid: SearchGrid<f64>, config: SearchConfig },
    Descent { m: usize, method: Method, tol: f64, max_iter: usize, beta: f64, alpha: Option<f64> },
    Solve { m: usize, tol: f64 },
}

const TOL: f64 = 1e-6;
const BETA: f64 = 0.95;
const MAX_ITER: usize = 200_000;

impl ExperimentSpec {
    pub fn table1() -> Self {
        Self::Table1 { m_values: vec![31, 63, 127, 255], tol: TOL, max_iter: MAX_ITER }
    }

    pub fn fig_stepsizes() -> Self {
        Self::FigStepsizes { m: 63, tol: TOL, max_iter: MAX_ITER }
    }

    pub fn fig_lsd_errors() -> Self {
        Self::FigLsdErrors { m: 63, tol: TOL, max_iter: MAX_ITER }
    }

    pub fn fig_compare() -> Self {
        Self::FigCompare {
            m: 63,
            tol: TOL,
            max_iter: MAX_ITER,
            beta: BETA,
            methods: vec![Method::Sd, Method::Lsd, Method::Nesterov, Method::Cg],
        }
    }

    pub fn fig_filter() -> Self {
        Self::FigFilter { t: 1.0, beta: 0.5, s_max: 10.0, points: 1000 }
    }

    pub fn midpoint_search() -> Self {
        Self::MidpointSearch { gamma: 1.0, grid: SearchGrid::default(), config: SearchConfig::default() }
    }

    pub fn descent(m: usize, method: Method) -> Self {
        Self::Descent { m, method, tol: TOL, max_iter: MAX_ITER, beta: BETA, alpha: None }
    }

    pub fn solve(m: usize) -> Self {
        Self::Solve { m, tol: 1e-12 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Table1 { .. } => "table1",
            Self::FigStepsizes { .. } => "fig_stepsizes",
            Self::FigLsdErrors { .. } => "fig_lsd_errors",
            Self::FigCompare { .. } => "fig_compare",
            Self::FigFilter { .. } => "fig_filter",
            Self::MidpointSearch { .. } => "midpoint_search",
            Self::Descent { .. } => "descent",
            Self::Solve { .. } => "solve",
        }
    }
}

/// One file produced by an experiment, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub files: Vec<OutputFile>,
    /// One line for the terminal.
    pub summary: String,
}

impl ExperimentOutput {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Row {
    pub xi: f64,
    pub m: usize,
    /// `max_k alpha_k` over the LSD run.
    pub h: f64,
    /// Fixed-step limit `xi^2 / 4`.
    pub bound: f64,
    pub iterations: usize,
}

impl Table1Row {
    pub fn ratio(&self) -> f64 {
        self.h / self.bound
    }
}

/// Poisson objective `-Delta_h x = 1` on the `m x m` interior grid.
pub fn poisson(m: usize) -> Result<QuadraticObjective<f64, Laplacian2d<f64>>, OperatorError> {
    let grid = GridSpec::new(m)?;
    let op = laplacian_2d(grid);
    QuadraticObjective::new(op, vec![1.0; grid.unknowns()])
}

fn poisson_with_reference(name: &str, m: usize) -> Result<QuadraticObjective<f64, Laplacian2d<f64>>, ExperimentError> {
    let mut obj = poisson(m).map_err(|e| ExperimentError::invalid(name, e.to_string()))?;
    obj.attach_reference(1e-12).map_err(|e| ExperimentError::numerical(name, e))?;
    Ok(obj)
}

fn run_method<A: crate::operators::LinearOperator<f64>>(
    obj: &QuadraticObjective<f64, A>,
    method: Method,
    beta: f64,
    alpha: Option<f64>,
    cfg: &RunConfig<f64>,
) -> Result<IterationTrace<f64>, DescentError> {
    match method {
        Method::Gd => {
            let a = alpha.ok_or_else(|| DescentError::InvalidConfig("constant-step descent needs alpha".into()))?;
            gradient_descent(obj, StepPolicy::Constant(a), cfg)
        }
        Method::Sd => gradient_descent(obj, StepPolicy::SteepestDescent, cfg),
        Method::Lsd => gradient_descent(obj, StepPolicy::Lagged, cfg),
        Method::Asd => gradient_descent(obj, StepPolicy::AlternatingSd, cfg),
        Method::Nesterov => nesterov(obj, beta, cfg),
        Method::Cg => conjugate_gradient(obj, cfg),
    }
}

/// Runs and insists on convergence; divergence or the iteration cap is a failure here.
fn converged_run<A: crate::operators::LinearOperator<f64>>(
    name: &str,
    obj: &QuadraticObjective<f64, A>,
    method: Method,
    beta: f64,
    cfg: &RunConfig<f64>,
) -> Result<IterationTrace<f64>, ExperimentError> {
    let trace = run_method(obj, method, beta, None, cfg).map_err(|e| ExperimentError::numerical(name, e))?;
    match trace.status {
        Termination::Converged => Ok(trace),
        Termination::MaxIter => {
            Err(ExperimentError::numerical(name, format!("{method} did not converge within {} iterations", cfg.max_iter)))
        }
        Termination::Diverged(d) => Err(ExperimentError::numerical(
            name,
            format!("{method} diverged at iteration {} (||r|| = {:e})", d.iteration, d.rnorm),
        )),
    }
}

fn check_tol(name: &str, tol: f64, max_iter: usize) -> Result<(), ExperimentError> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(ExperimentError::invalid(name, format!("tol must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(ExperimentError::invalid(name, "max_iter must be at least 1"));
    }
    Ok(())
}

/// LSD on the Poisson problem for each grid size; rows in input order.
pub fn run_table1(m_values: &[usize], tol: f64, max_iter: usize) -> Result<Vec<Table1Row>, ExperimentError> {
    const NAME: &str = "table1";
    check_tol(NAME, tol, max_iter)?;
    m_values
        .par_iter()
        .map(|&m| {
            let obj = poisson(m).map_err(|e| ExperimentError::invalid(NAME, e.to_string()))?;
            let trace = converged_run(NAME, &obj, Method::Lsd, BETA, &RunConfig::new(tol, max_iter))?;
            let xi = 1.0 / (m as f64 + 1.0);
            let h = trace.max_alpha().unwrap_or(0.0);
            Ok(Table1Row { xi, m, h, bound: xi * xi / 4.0, iterations: trace.iterations() })
        })
        .collect()
}

pub fn table1_csv(rows: &[Table1Row]) -> String {
    let mut out = format!("{TABLE1_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", fmt17(r.xi), r.m, fmt17(r.h), fmt17(r.bound), fmt17(r.ratio()), r.iterations);
    }
    out
}

/// SD, LSD, Nesterov and CG (or any chosen subset) on one Poisson problem, with `Ef` recorded.
pub fn run_compare(m: usize, tol: f64, max_iter: usize, beta: f64, methods: &[Method]) -> Result<Vec<IterationTrace<f64>>, ExperimentError> {
    const NAME: &str = "fig_compare";
    check_tol(NAME, tol, max_iter)?;
    if methods.is_empty() || methods.contains(&Method::Gd) {
        return Err(ExperimentError::invalid(NAME, "methods must be a non-empty list without gd"));
    }
    let obj = poisson_with_reference(NAME, m)?;
    let cfg = RunConfig::new(tol, max_iter).with_ferr();
    methods.par_iter().map(|&method| converged_run(NAME, &obj, method, beta, &cfg)).collect()
}

/// Wide table `k,Er_<method>,Ef_<method>,...`; a method's cells are empty past its last iteration.
pub fn aligned_csv(traces: &[IterationTrace<f64>]) -> String {
    let mut out = String::from("k");
    for t in traces {
        let _ = write!(out, ",Er_{0},Ef_{0}", t.method);
    }
    out.push('\n');
    let len = traces.iter().map(|t| t.rows.len()).max().unwrap_or(0);
    for i in 0..len {
        let _ = write!(out, "{}", i + 1);
        for t in traces {
            match t.rows.get(i) {
                Some(r) => {
                    let _ = write!(out, ",{},{}", fmt17(r.er), r.ef.map(fmt17).unwrap_or_default());
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn stepsizes_csv(trace: &IterationTrace<f64>, bound: f64) -> String {
    let mut out = format!("{STEPSIZES_HEADER}\n");
    for r in &trace.rows {
        let _ = writeln!(out, "{},{},{}", r.k, fmt17(r.alpha), fmt17(bound));
    }
    out
}

fn solution_csv(m: usize, x: &[f64]) -> String {
    let mut out = String::from("i,j,x\n");
    for (idx, v) in x.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", idx / m + 1, idx % m + 1, fmt17(*v));
    }
    out
}

fn file(name: impl Into<String>, contents: String) -> OutputFile {
    OutputFile { name: name.into(), contents }
}

/// Executes `spec` in memory.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput, ExperimentError> {
    let name = spec.name();
    match spec {
        ExperimentSpec::Table1 { m_values, tol, max_iter } => {
            let rows = run_table1(m_values, *tol, *max_iter)?;
            let summary = rows.iter().map(|r| format!("m={} h={:.3} ratio={:.0}", r.m, r.h, r.ratio())).collect::<Vec<_>>().join("; ");
            Ok(ExperimentOutput { files: vec![file("table1.csv", table1_csv(&rows))], summary: format!("table1: {summary}") })
        }
        ExperimentSpec::FigStepsizes { m, tol, max_iter } => {
            check_tol(name, *tol, *max_iter)?;
            let obj = poisson(*m).map_err(|e| ExperimentError::invalid(name, e.to_string()))?;
            let trace = converged_run(name, &obj, Method::Lsd, BETA, &RunConfig::new(*tol, *max_iter))?;
            let xi = 1.0 / (*m as f64 + 1.0);
            let bound = xi * xi / 4.0;
            let summary = format!("fig_stepsizes: m={m} iterations={} max alpha={:.4e} bound={bound:.4e}", trace.iterations(), trace.max_alpha().unwrap_or(0.0));
            Ok(ExperimentOutput { files: vec![file("stepsizes.csv", stepsizes_csv(&trace, bound))], summary })
        }
        ExperimentSpec::FigLsdErrors { m, tol, max_iter } => {
            check_tol(name, *tol, *max_iter)?;
            let obj = poisson_with_reference(name, *m)?;
            let trace = converged_run(name, &obj, Method::Lsd, BETA, &RunConfig::new(*tol, *max_iter).with_ferr())?;
            let summary = format!("fig_lsd_errors: m={m} iterations={}", trace.iterations());
            Ok(ExperimentOutput { files: vec![file("lsd_trace.csv", trace.to_csv())], summary })
        }
        ExperimentSpec::FigCompare { m, tol, max_iter, beta, methods } => {
            let traces = run_compare(*m, *tol, *max_iter, *beta, methods)?;
            let mut files: Vec<OutputFile> = traces.iter().map(|t| file(format!("compare_{}.csv", t.method), t.to_csv())).collect();
            files.push(file("compare.csv", aligned_csv(&traces)));
            let counts = traces.iter().map(|t| format!("{}={}", t.method, t.iterations())).collect::<Vec<_>>().join(" ");
            Ok(ExperimentOutput { files, summary: format!("fig_compare: m={m} iterations {counts}") })
        }
        ExperimentSpec::FigFilter { t, beta, s_max, points } => {
            if !(*s_max > 0.0) || *points < 2 {
                return Err(ExperimentError::invalid(name, "need s_max > 0 and at least 2 points"));
            }
            let grid = sample_grid(*s_max, *points);
            let curves = filter_curves(*t, *beta, &grid).map_err(|e: FilterError| ExperimentError::invalid(name, e.to_string()))?;
            let sup = curves.iter().map(|p| (p.omega_exp - p.omega_tik).abs()).fold(0.0, f64::max);
            let summary = format!("fig_filter: {points} points on [0, {s_max}], sup |exp - tik| = {sup:.6}");
            Ok(ExperimentOutput { files: vec![file("filter_curves.csv", filter_curves_csv(&curves))], summary })
        }
        ExperimentSpec::MidpointSearch { gamma, grid, config } => {
            let report = instability_search(RotatingJordan::new, *gamma, grid, config).map_err(|e: MidpointError| ExperimentError::invalid(name, e.to_string()))?;
            if let Some(bad) = report.failures().next() {
                let err = bad.estimates.as_ref().expect_err("failure");
                return Err(ExperimentError::numerical(name, format!("point p={} c={}: {err}", bad.p, bad.c)));
            }
            let summary = format!("midpoint_search: {} points, {} flagged", report.points.len(), report.witnesses().count());
            Ok(ExperimentOutput { files: vec![file("midpoint_search.csv", report.to_csv())], summary })
        }
        ExperimentSpec::Descent { m, method, tol, max_iter, beta, alpha } => {
            check_tol(name, *tol, *max_iter)?;
            if *method == Method::Gd && alpha.is_none_or(|a| !(a > 0.0)) {
                return Err(ExperimentError::invalid(name, "gd needs a positive alpha"));
            }
            let obj = poisson_with_reference(name, *m)?;
            let cfg = RunConfig::new(*tol, *max_iter).with_ferr();
            let trace = run_method(&obj, *method, *beta, *alpha, &cfg).map_err(|e| ExperimentError::numerical(name, e))?;
            let status = match trace.status {
                Termination::Converged => "converged".to_string(),
                Termination::MaxIter => "stopped at max_iter".to_string(),
                Termination::Diverged(d) => format!("diverged at iteration {}", d.iteration),
            };
            let last_er = trace.rows.last().map_or(trace.r0norm, |r| r.er);
            let summary = format!("descent: {method} m={m} {status} after {} iterations, Er={last_er:.3e}", trace.iterations());
            let mut files = vec![file(format!("descent_{method}.csv"), trace.to_csv())];
            if matches!(method, Method::Gd | Method::Sd | Method::Lsd | Method::Asd) {
                let xi = 1.0 / (*m as f64 + 1.0);
                files.push(file(format!("stepsizes_{method}.csv"), stepsizes_csv(&trace, xi * xi / 4.0)));
            }
            Ok(ExperimentOutput { files, summary })
        }
        ExperimentSpec::Solve { m, tol } => {
            let obj = poisson(*m).map_err(|e| ExperimentError::invalid(name, e.to_string()))?;
            let sol = solve_reference(&obj, *tol).map_err(|e| match e {
                OperatorError::InvalidTolerance(_) => ExperimentError::invalid(name, e.to_string()),
                other => ExperimentError::numerical(name, other),
            })?;
            let summary = format!("solve: m={m} CG iterations={} f(x*)={:.12e}", sol.iterations, sol.fstar);
            Ok(ExperimentOutput { files: vec![file("solution.csv", solution_csv(*m, &sol.x))], summary })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub spec: ExperimentSpec,
    /// Command-line arguments that reproduce the run, output directory excluded.
    pub command: Vec<String>,
    pub files: Vec<FileChecksum>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiments: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| ExperimentError::Manifest { path: path.into(), source })
    }

    pub fn entry(&self, name: &str) -> Option<&ManifestEntry> {
        self.experiments.iter().find(|e| e.name == name)
    }

    /// Replaces the entry with the same name, or appends.
    pub fn upsert(&mut self, entry: ManifestEntry) {
        match self.experiments.iter_mut().find(|e| e.name == entry.name) {
            Some(slot) => *slot = entry,
            None => self.experiments.push(entry),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes the output files under `dir` and records them in `dir/manifest.json`,
/// keeping entries of other experiments already listed there.
pub fn write_outputs(dir: &Path, spec: &ExperimentSpec, command: &[String], output: &ExperimentOutput) -> Result<ManifestEntry, ExperimentError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = Vec::with_capacity(output.files.len());
    for f in &output.files {
        let path = dir.join(&f.name);
        fs::write(&path, &f.contents).map_err(io(&path))?;
        files.push(FileChecksum { path: f.name.clone(), sha256: sha256_hex(f.contents.as_bytes()) });
    }
    let entry = ManifestEntry { name: spec.name().into(), spec: spec.clone(), command: command.to_vec(), files };
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut manifest = if manifest_path.exists() { Manifest::load(&manifest_path)? } else { Manifest::default() };
    manifest.upsert(entry.clone());
    let text = serde_json::to_string_pretty(&manifest).map_err(|source| ExperimentError::Manifest { path: manifest_path.clone(), source })?;
    fs::write(&manifest_path, text + "\n").map_err(io(&manifest_path))?;
    Ok(entry)
}
