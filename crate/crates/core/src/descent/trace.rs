//! Per-iteration records, best-so-far bookkeeping and the trace CSV format.

use std::fmt::Write as _;

use crate::Scalar;

/// CSV header of a serialized trace.
pub const TRACE_HEADER: &str = "k,alpha,rnorm,ferr,ell,Egrad,Ef,Er";

/// State after iteration `k` (1-based): `x_k` was produced with step `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow<T> {
    pub k: usize,
    pub alpha: T,
    /// `||b - A x_k||_2`
    pub rnorm: T,
    /// `f(x_k)`
    pub f: T,
    /// `f(x_k) - f(x*)`, present when the objective carries a reference value.
    pub ferr: Option<T>,
    /// Index of the best iterate so far by gradient norm.
    pub ell: usize,
    pub egrad: T,
    pub ef: Option<T>,
    pub er: T,
}

/// Best iterate seen so far, ranked by gradient norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestSoFar<T> {
    pub ell: usize,
    pub gradnorm: T,
    pub rnorm: T,
    pub ferr: Option<T>,
}

/// Running argmin of `||grad f(x_l)||` over `1 <= l <= k`, updated one step at a time.
///
/// Ties go to the later index.
#[derive(Debug, Clone, Default)]
pub struct Monotonizer<T> {
    best: Option<BestSoFar<T>>,
}

impl<T: Scalar> Monotonizer<T> {
    pub fn new() -> Self {
        Self { best: None }
    }

    /// Feeds iterate `k`; returns the updated `ell_k`.
    pub fn observe(&mut self, k: usize, gradnorm: T, rnorm: T, ferr: Option<T>) -> usize {
        let take = match self.best {
            None => true,
            Some(b) => gradnorm <= b.gradnorm,
        };
        if take {
            self.best = Some(BestSoFar { ell: k, gradnorm, rnorm, ferr });
        }
        self.best.map_or(k, |b| b.ell)
    }

    pub fn best(&self) -> Option<BestSoFar<T>> {
        self.best
    }
}

/// One-step update of the best index: `k` if `gradnorm_k <= gradnorm(ell_{k-1})`, else `ell_{k-1}`.
pub fn monotonize<T: Scalar>(prev: Option<(usize, T)>, gradnorm: T, k: usize) -> (usize, T) {
    match prev {
        Some((ell, g)) if gradnorm > g => (ell, g),
        _ => (k, gradnorm),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport<T> {
    pub iteration: usize,
    pub rnorm: T,
    pub r0norm: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination<T> {
    /// `||r_k|| <= tol ||r_0||`
    Converged,
    MaxIter,
    /// `||r_k||` exceeded the divergence threshold (or became non-finite).
    Diverged(DivergenceReport<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace<T> {
    pub method: String,
    pub r0norm: T,
    /// `f(x_0)`
    pub f0: T,
    pub rows: Vec<TraceRow<T>>,
    pub status: Termination<T>,
    /// Last iterate.
    pub x: Vec<T>,
}

impl<T: Scalar> IterationTrace<T> {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn converged(&self) -> bool {
        matches!(self.status, Termination::Converged)
    }

    pub fn diverged(&self) -> Option<DivergenceReport<T>> {
        match self.status {
            Termination::Diverged(r) => Some(r),
            _ => None,
        }
    }

    pub fn alphas(&self) -> impl Iterator<Item = T> + '_ {
        self.rows.iter().map(|r| r.alpha)
    }

    pub fn max_alpha(&self) -> Option<T> {
        self.alphas().fold(None, |m, a| Some(m.map_or(a, |m: T| m.max(a))))
    }

    /// First `k` with `Er_k <= threshold`.
    pub fn first_below(&self, threshold: T) -> Option<usize> {
        self.rows.iter().find(|r| r.er <= threshold).map(|r| r.k)
    }

    /// Serializes to the trace CSV: 17 significant digits, empty fields for
    /// columns that need a missing reference value.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.k,
                fmt17(r.alpha),
                fmt17(r.rnorm),
                r.ferr.map(fmt17).unwrap_or_default(),
                r.ell,
                fmt17(r.egrad),
                r.ef.map(fmt17).unwrap_or_default(),
                fmt17(r.er),
            );
        }
        out
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17<T: Scalar>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}
