//! Implicit midpoint for stiff linear non-autonomous systems `u' = omega A(t) u`.
//!
//! The sign-flipped iterates `v_k = (-1)^k u_k` satisfy the midpoint rule for
//! the ghost system `v' = gamma^{-1} A(t)^{-1} v` with `gamma = omega h^2 / 4`.

mod family;
mod floquet;
mod search;

use thiserror::Error;

use crate::linalg::{norm2, DenseMatrix, LinalgError};
use crate::Scalar;

pub use family::{ConstantFamily, MatrixFamily, RotatingJordan};
pub use floquet::{amplitude_fit, monodromy, FloquetEstimate, TargetOde};
pub use search::{instability_search, PointEstimates, SearchConfig, SearchGrid, SearchPoint, SearchReport, SEARCH_HEADER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MidpointError {
    #[error("invalid midpoint problem: {0}")]
    InvalidProblem(String),
    #[error("midpoint system I - (omega h / 2) A is singular at t = {t:e}")]
    SingularStep { t: f64 },
    #[error("A(t) is singular at t = {t:e}")]
    SingularMatrix { t: f64 },
    #[error("state has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix family has no period")]
    NotPeriodic,
    #[error("integration produced a non-finite state at t = {t:e}")]
    NonFinite { t: f64 },
}

/// `u' = omega A(t) u` on `[0, t_final]`, discretized with step `h`.
#[derive(Debug, Clone)]
pub struct MidpointProblem<T, F> {
    omega: T,
    family: F,
    t_final: T,
    h: T,
    gamma: T,
    steps: usize,
}

impl<T: Scalar, F: MatrixFamily<T>> MidpointProblem<T, F> {
    /// `t_final` must be an integer multiple of `h` up to rounding.
    pub fn new(omega: T, family: F, t_final: T, h: T) -> Result<Self, MidpointError> {
        if !(omega > T::zero()) || !omega.is_finite() {
            return Err(MidpointError::InvalidProblem(format!("omega must be positive, got {omega}")));
        }
        if !(h > T::zero()) || !(t_final > T::zero()) || !t_final.is_finite() {
            return Err(MidpointError::InvalidProblem(format!("need h > 0 and t_final > 0, got h = {h}, t_final = {t_final}")));
        }
        let ratio = t_final / h;
        let steps = ratio.round();
        if (ratio - steps).abs() > T::lit(1e-8) * ratio.max(T::one()) || steps < T::one() {
            return Err(MidpointError::InvalidProblem(format!("t_final / h = {ratio} is not a positive integer")));
        }
        let steps = steps.to_usize().expect("finite positive step count");
        let gamma = omega * h * h / T::lit(4.0);
        Ok(Self { omega, family, t_final, h, gamma, steps })
    }

    /// Chooses `omega` so that `omega h^2 / 4 = gamma`.
    pub fn on_ray(gamma: T, family: F, t_final: T, h: T) -> Result<Self, MidpointError> {
        if !(gamma > T::zero()) {
            return Err(MidpointError::InvalidProblem(format!("gamma must be positive, got {gamma}")));
        }
        Self::new(T::lit(4.0) * gamma / (h * h), family, t_final, h)
    }

    pub fn omega(&self) -> T {
        self.omega
    }

    pub fn family(&self) -> &F {
        &self.family
    }

    pub fn t_final(&self) -> T {
        self.t_final
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    fn time(&self, k: usize) -> T {
        T::from_index(k) * self.h
    }
}

/// Iterates `u_k` at `t_k = k h` and their sign flips `v_k = (-1)^k u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MidpointTrajectory<T> {
    pub u_seq: Vec<Vec<T>>,
    pub v_seq: Vec<Vec<T>>,
}

impl<T: Scalar> MidpointTrajectory<T> {
    fn from_u(u_seq: Vec<Vec<T>>) -> Self {
        let v_seq = u_seq
            .iter()
            .enumerate()
            .map(|(k, u)| if k % 2 == 0 { u.clone() } else { u.iter().map(|&x| -x).collect() })
            .collect();
        Self { u_seq, v_seq }
    }

    pub fn last(&self) -> &[T] {
        self.u_seq.last().expect("trajectory holds u_0")
    }

    /// `||u_N|| / ||u_0||`.
    pub fn amplification(&self) -> T {
        norm2(self.last()) / norm2(&self.u_seq[0])
    }
}

fn check_len<T>(expected: usize, v: &[T]) -> Result<(), MidpointError> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(MidpointError::DimensionMismatch { expected, got: v.len() })
    }
}

/// One implicit midpoint step from `(t_k, u_k)`.
pub fn midpoint_step<T: Scalar, F: MatrixFamily<T>>(
    prob: &MidpointProblem<T, F>,
    u_k: &[T],
    t_k: T,
) -> Result<Vec<T>, MidpointError> {
    let n = prob.dim();
    check_len(n, u_k)?;
    let t_mid = t_k + prob.h / T::lit(2.0);
    let a = prob.family.at(t_mid);
    let half = prob.omega * prob.h / T::lit(2.0);
    let lhs = DenseMatrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() } - half * a[(i, j)]);
    let au = a.matvec(u_k);
    let rhs: Vec<T> = u_k.iter().zip(&au).map(|(&u, &w)| u + half * w).collect();
    lhs.solve(&rhs).map_err(|_| MidpointError::SingularStep { t: t_mid.to_f64_lossy() })
}

/// Runs all `t_final / h` steps from `u0`.
pub fn integrate<T: Scalar, F: MatrixFamily<T>>(
    prob: &MidpointProblem<T, F>,
    u0: &[T],
) -> Result<MidpointTrajectory<T>, MidpointError> {
    check_len(prob.dim(), u0)?;
    let mut u_seq = Vec::with_capacity(prob.steps + 1);
    u_seq.push(u0.to_vec());
    for k in 0..prob.steps {
        let next = midpoint_step(prob, &u_seq[k], prob.time(k))?;
        if next.iter().any(|x| !x.is_finite()) {
            return Err(MidpointError::NonFinite { t: prob.time(k + 1).to_f64_lossy() });
        }
        u_seq.push(next);
    }
    Ok(MidpointTrajectory::from_u(u_seq))
}

/// `gamma^{-1} A(t)^{-1} v`.
pub fn ghost_rhs<T: Scalar, F: MatrixFamily<T>>(prob: &MidpointProblem<T, F>, t: T, v: &[T]) -> Result<Vec<T>, MidpointError> {
    check_len(prob.dim(), v)?;
    ghost_apply(&prob.family, prob.gamma, t, v)
}

fn ghost_apply<T: Scalar, F: MatrixFamily<T>>(family: &F, gamma: T, t: T, v: &[T]) -> Result<Vec<T>, MidpointError> {
    let w = family.at(t).solve(v).map_err(|e| match e {
        LinalgError::Singular { .. } => MidpointError::SingularMatrix { t: t.to_f64_lossy() },
        other => MidpointError::InvalidProblem(other.to_string()),
    })?;
    Ok(w.into_iter().map(|x| x / gamma).collect())
}

/// Largest residual of the ghost midpoint rule along `traj`:
///
/// `h ||(v_{k+1} - v_k)/h - gamma^{-1} A^{-1}(t_{k+1/2}) (v_{k+1} + v_k)/2|| / max(||v_k||, ||v_{k+1}||)`
///
/// The factor `h` and the per-step normalization make rounding-level output
/// of order machine epsilon for any `h`, `omega` and growth or decay of `v`.
pub fn verify_ghost_identity<T: Scalar, F: MatrixFamily<T>>(
    traj: &MidpointTrajectory<T>,
    prob: &MidpointProblem<T, F>,
) -> Result<T, MidpointError> {
    let mut worst = T::zero();
    let h = prob.h;
    for (k, pair) in traj.v_seq.windows(2).enumerate() {
        let (v0, v1) = (&pair[0], &pair[1]);
        let scale = norm2(v0).max(norm2(v1));
        if scale == T::zero() {
            continue;
        }
        let avg: Vec<T> = v0.iter().zip(v1).map(|(&a, &b)| (a + b) / T::lit(2.0)).collect();
        let g = ghost_apply(&prob.family, prob.gamma, prob.time(k) + h / T::lit(2.0), &avg)?;
        let res: Vec<T> = v0.iter().zip(v1).zip(&g).map(|((&a, &b), &gi)| (b - a) - h * gi).collect();
        worst = worst.max(norm2(&res) / scale);
    }
    Ok(worst)
}
