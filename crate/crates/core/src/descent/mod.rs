//! First-order iterations for `min 1/2 x^T A x - b^T x`.
//!
//! Every method here doubles as forward Euler on `dx/dt = b - A x` with time
//! step `h_k = alpha_k`. They differ only in how the step is chosen:
//!
//! * constant step,
//! * steepest descent (exact line search, `alpha_k = (r_k, r_k) / (r_k, A r_k)`),
//! * lagged steepest descent (the same quotient evaluated at `r_{k-1}`),
//! * alternating steepest descent (the SD step refreshed every second iteration),
//!
//! plus Nesterov's accelerated method with SD steps at the extrapolated point
//! and plain conjugate gradients as the Krylov-optimal yardstick. All of them
//! produce the same [`IterationTrace`] schema.

mod trace;

pub use trace::{
    fmt17, monotonize, BestSoFar, DivergenceReport, IterationTrace, Monotonizer, Termination, TraceRow, TRACE_HEADER,
};

use thiserror::Error;

use crate::linalg::{axpy, dot, norm2};
use crate::operators::{LinearOperator, OperatorError, QuadraticObjective};
use crate::Scalar;

/// `||r_k|| > DIVERGENCE_FACTOR * ||r_0||` ends a run as diverged.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescentError {
    #[error("dimension mismatch: objective has dimension {expected}, vector has length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("residual is zero; the iteration has already converged")]
    ConvergedState,
    #[error("(r, A r) = {0:e} is not positive; operator is not SPD")]
    NotPositiveDefinite(f64),
    #[error("CG breakdown at iteration {iteration}: p^T A p = {pap:e}; operator is not SPD")]
    Breakdown { iteration: usize, pap: f64 },
    #[error("f(x*) requested but the objective carries no reference solution")]
    MissingReference,
    #[error("momentum must satisfy 0 <= beta < 1 (got {0})")]
    InvalidMomentum(f64),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Rule producing the step size `alpha_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPolicy<T> {
    Constant(T),
    SteepestDescent,
    /// Lagged steepest descent; the first step falls back to SD.
    Lagged,
    /// SD step computed at even `k` and reused at the following odd `k`.
    AlternatingSd,
}

impl<T: Scalar> StepPolicy<T> {
    pub fn label(&self) -> &'static str {
        match self {
            StepPolicy::Constant(_) => "gd",
            StepPolicy::SteepestDescent => "sd",
            StepPolicy::Lagged => "lsd",
            StepPolicy::AlternatingSd => "asd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    /// Relative residual tolerance: stop once `||r_k|| <= tol ||r_0||`.
    pub tol: T,
    pub max_iter: usize,
    /// Initial iterate; zero when `None`.
    pub x0: Option<Vec<T>>,
    /// Record `f(x_k) - f(x*)`; requires a reference value on the objective.
    pub record_ferr: bool,
}

impl<T: Scalar> RunConfig<T> {
    pub fn new(tol: T, max_iter: usize) -> Self {
        Self { tol, max_iter, x0: None, record_ferr: false }
    }

    pub fn with_ferr(mut self) -> Self {
        self.record_ferr = true;
        self
    }

    pub fn with_x0(mut self, x0: Vec<T>) -> Self {
        self.x0 = Some(x0);
        self
    }

    fn validate(&self, n: usize) -> Result<(), DescentError> {
        if !(self.tol > T::zero()) {
            return Err(DescentError::InvalidConfig(format!("tol must be positive (got {})", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(DescentError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return Err(DescentError::DimensionMismatch { expected: n, got: x0.len() });
            }
        }
        Ok(())
    }
}

/// Steepest-descent step `(r, r) / (r, A r)`.
pub fn sd_step<T: Scalar, A: LinearOperator<T> + ?Sized>(r: &[T], op: &A) -> Result<T, DescentError> {
    if r.len() != op.dim() {
        return Err(DescentError::DimensionMismatch { expected: op.dim(), got: r.len() });
    }
    let rr = dot(r, r);
    if rr == T::zero() {
        return Err(DescentError::ConvergedState);
    }
    let rar = dot(r, &op.apply(r));
    if !(rar > T::zero()) {
        return Err(DescentError::NotPositiveDefinite(rar.to_f64_lossy()));
    }
    Ok(rr / rar)
}

/// History for the lagged step: the SD quotient of the previous residual.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LaggedHistory<T> {
    previous: Option<T>,
}

impl<T: Scalar> LaggedHistory<T> {
    pub fn new() -> Self {
        Self { previous: None }
    }

    /// Stores `sd_step(r_k)` for use at iteration `k + 1`; returns it.
    pub fn record<A: LinearOperator<T> + ?Sized>(&mut self, r: &[T], op: &A) -> Result<T, DescentError> {
        let q = sd_step(r, op)?;
        self.previous = Some(q);
        Ok(q)
    }

    pub fn previous(&self) -> Option<T> {
        self.previous
    }
}

/// Lagged step from the history, or `fallback` (the current SD step) at `k = 0`.
pub fn lsd_step<T: Scalar>(history: &LaggedHistory<T>, fallback: T) -> T {
    history.previous.unwrap_or(fallback)
}

/// Mutable per-run state behind a [`StepPolicy`].
#[derive(Debug, Clone)]
enum StepState<T> {
    Constant(T),
    Sd,
    Lagged(LaggedHistory<T>),
    Alternating { held: Option<T> },
}

impl<T: Scalar> StepState<T> {
    fn new(policy: StepPolicy<T>) -> Result<Self, DescentError> {
        Ok(match policy {
            StepPolicy::Constant(a) => {
                if !(a > T::zero()) {
                    return Err(DescentError::InvalidConfig(format!("constant step must be positive (got {a})")));
                }
                StepState::Constant(a)
            }
            StepPolicy::SteepestDescent => StepState::Sd,
            StepPolicy::Lagged => StepState::Lagged(LaggedHistory::new()),
            StepPolicy::AlternatingSd => StepState::Alternating { held: None },
        })
    }

    /// `alpha_k` for the current residual `r_k` (0-based `k`).
    fn next<A: LinearOperator<T> + ?Sized>(&mut self, k: usize, r: &[T], op: &A) -> Result<T, DescentError> {
        match self {
            StepState::Constant(a) => Ok(*a),
            StepState::Sd => sd_step(r, op),
            StepState::Lagged(history) => {
                let lagged = history.previous();
                let current = history.record(r, op)?;
                Ok(lagged.unwrap_or(current))
            }
            StepState::Alternating { held } => match (k % 2, *held) {
                (1, Some(a)) => Ok(a),
                _ => {
                    let a = sd_step(r, op)?;
                    *held = Some(a);
                    Ok(a)
                }
            },
        }
    }
}

/// Shared recording/termination logic for all methods.
struct Recorder<'a, T, A> {
    obj: &'a QuadraticObjective<T, A>,
    record_ferr: bool,
    tol: T,
    r0norm: T,
    monotonizer: Monotonizer<T>,
    rows: Vec<TraceRow<T>>,
}

enum Verdict<T> {
    Continue,
    Stop(Termination<T>),
}

impl<'a, T: Scalar, A: LinearOperator<T>> Recorder<'a, T, A> {
    fn new(obj: &'a QuadraticObjective<T, A>, cfg: &RunConfig<T>, r0norm: T) -> Result<Self, DescentError> {
        if cfg.record_ferr && obj.fstar().is_none() {
            return Err(DescentError::MissingReference);
        }
        Ok(Self { obj, record_ferr: cfg.record_ferr, tol: cfg.tol, r0norm, monotonizer: Monotonizer::new(), rows: Vec::new() })
    }

    /// Records `x_k` with its true residual `r`.
    fn record(&mut self, k: usize, alpha: T, x: &[T], r: &[T]) -> Verdict<T> {
        let rnorm = norm2(r);
        let f = self.obj.value_with_residual(x, r);
        let ferr = if self.record_ferr { self.obj.gap_with_residual(x, r) } else { None };
        // for a quadratic, ||grad f(x)|| = ||r||
        let ell = self.monotonizer.observe(k, rnorm, rnorm, ferr);
        let best = self.monotonizer.best().expect("observed at least once");
        self.rows.push(TraceRow { k, alpha, rnorm, f, ferr, ell, egrad: best.gradnorm, ef: best.ferr, er: best.rnorm });
        if rnorm <= self.tol * self.r0norm {
            Verdict::Stop(Termination::Converged)
        } else if !rnorm.is_finite() || rnorm > T::lit(DIVERGENCE_FACTOR) * self.r0norm {
            Verdict::Stop(Termination::Diverged(DivergenceReport { iteration: k, rnorm, r0norm: self.r0norm }))
        } else {
            Verdict::Continue
        }
    }

    fn finish(self, method: &str, f0: T, status: Termination<T>, x: Vec<T>) -> IterationTrace<T> {
        IterationTrace { method: method.to_string(), r0norm: self.r0norm, f0, rows: self.rows, status, x }
    }
}

fn initial_state<T: Scalar, A: LinearOperator<T>>(
    obj: &QuadraticObjective<T, A>,
    cfg: &RunConfig<T>,
) -> Result<(Vec<T>, Vec<T>), DescentError> {
    cfg.validate(obj.dim())?;
    let x = cfg.x0.clone().unwrap_or_else(|| vec![T::zero(); obj.dim()]);
    let r = obj.residual(&x);
    Ok((x, r))
}

/// `x_{k+1} = x_k + alpha_k r_k` with `alpha_k` from `policy`.
///
/// Stops when `||r_k|| <= tol ||r_0||`, at `max_iter`, or when the residual
/// blows past [`DIVERGENCE_FACTOR`]` * ||r_0||`. Divergence is reported in the
/// trace status, not as an error.
pub fn gradient_descent<T: Scalar, A: LinearOperator<T>>(
    obj: &QuadraticObjective<T, A>,
    policy: StepPolicy<T>,
    cfg: &RunConfig<T>,
) -> Result<IterationTrace<T>, DescentError> {
    let (mut x, mut r) = initial_state(obj, cfg)?;
    let mut state = StepState::new(policy)?;
    let r0norm = norm2(&r);
    let f0 = obj.value_with_residual(&x, &r);
    let mut rec = Recorder::new(obj, cfg, r0norm)?;
    if r0norm == T::zero() {
        return Ok(rec.finish(policy.label(), f0, Termination::Converged, x));
    }
    let mut status = Termination::MaxIter;
    for k in 0..cfg.max_iter {
        let alpha = state.next(k, &r, obj.operator())?;
        axpy(alpha, &r, &mut x);
        r = obj.residual(&x);
        if let Verdict::Stop(s) = rec.record(k + 1, alpha, &x, &r) {
            status = s;
            break;
        }
    }
    Ok(rec.finish(policy.label(), f0, status, x))
}

/// Nesterov's method with SD steps at the extrapolated point:
///
/// `y_{k+1} = x_k + beta (x_k - x_{k-1})`, `x_{k+1} = y_{k+1} + alpha_k (b - A y_{k+1})`,
/// `alpha_k = sd_step(b - A y_{k+1})`, with `x_{-1} = x_0`.
pub fn nesterov<T: Scalar, A: LinearOperator<T>>(
    obj: &QuadraticObjective<T, A>,
    beta: T,
    cfg: &RunConfig<T>,
) -> Result<IterationTrace<T>, DescentError> {
    if !(beta >= T::zero() && beta < T::one()) {
        return Err(DescentError::InvalidMomentum(beta.to_f64_lossy()));
    }
    let (mut x, r) = initial_state(obj, cfg)?;
    let r0norm = norm2(&r);
    let f0 = obj.value_with_residual(&x, &r);
    let mut rec = Recorder::new(obj, cfg, r0norm)?;
    if r0norm == T::zero() {
        return Ok(rec.finish("nesterov", f0, Termination::Converged, x));
    }
    let mut x_prev = x.clone();
    let mut status = Termination::MaxIter;
    for k in 0..cfg.max_iter {
        let mut y: Vec<T> = x.iter().zip(&x_prev).map(|(&xi, &pi)| xi + beta * (xi - pi)).collect();
        let ry = obj.residual(&y);
        let alpha = match sd_step(&ry, obj.operator()) {
            Ok(a) => a,
            // y is the exact minimizer; the step is irrelevant
            Err(DescentError::ConvergedState) => T::zero(),
            Err(e) => return Err(e),
        };
        axpy(alpha, &ry, &mut y);
        x_prev = std::mem::replace(&mut x, y);
        let r = obj.residual(&x);
        if let Verdict::Stop(s) = rec.record(k + 1, alpha, &x, &r) {
            status = s;
            break;
        }
    }
    Ok(rec.finish("nesterov", f0, status, x))
}

/// Conjugate gradients, traced in the common schema. `alpha` is the step along
/// the search direction, and termination uses the true residual.
pub fn conjugate_gradient<T: Scalar, A: LinearOperator<T>>(
    obj: &QuadraticObjective<T, A>,
    cfg: &RunConfig<T>,
) -> Result<IterationTrace<T>, DescentError> {
    let (mut x, true_r) = initial_state(obj, cfg)?;
    let r0norm = norm2(&true_r);
    let f0 = obj.value_with_residual(&x, &true_r);
    let mut rec = Recorder::new(obj, cfg, r0norm)?;
    if r0norm == T::zero() {
        return Ok(rec.finish("cg", f0, Termination::Converged, x));
    }
    let n = obj.dim();
    let mut r = true_r;
    let mut p = r.clone();
    let mut ap = vec![T::zero(); n];
    let mut rr = dot(&r, &r);
    let mut status = Termination::MaxIter;
    for k in 0..cfg.max_iter {
        obj.operator().apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(DescentError::Breakdown { iteration: k + 1, pap: pap.to_f64_lossy() });
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let true_r = obj.residual(&x);
        if let Verdict::Stop(s) = rec.record(k + 1, alpha, &x, &true_r) {
            status = s;
            break;
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Ok(rec.finish("cg", f0, status, x))
}
