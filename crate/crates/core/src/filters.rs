//! Spectral regularization filters.
//!
//! For `A = U diag(s) U^T` the exact solve is `x = U y`, `y_i = (U^T b)_i / s_i`.
//! A filter replaces `1/s_i` by `w_i / s_i` with a weight `w_i in [0, 1]` that
//! suppresses the small singular values:
//!
//! * truncated SVD: `w_i = 1` for `i < i0`, `0` otherwise (index based),
//! * Tikhonov: `w(s) = s / (s + beta)`,
//! * exponential: `w(s) = 1 - exp(-t s)`, the filter realized by integrating
//!   `dx/dt = b - A x` from `x(0) = 0` up to time `t`.
//!
//! Forward Euler on the same ODE with step `h` realizes `1 - (1 - h s)^N`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::{norm2, DenseMatrix, LinalgError};
use crate::operators::{lambda_max, LinearOperator, OperatorError, PowerIterationConfig, Provenance, SpectrumHint};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("filter argument must be non-negative (got {0})")]
    NegativeArgument(f64),
    #[error("invalid filter parameter: {0}")]
    InvalidParameter(String),
    #[error("singular value s_{index} is zero but its filter weight {weight} is not")]
    DivisionBarrier { index: usize, weight: f64 },
    #[error("U is not orthogonal: max |U^T U - I| = {0:e}")]
    NotOrthogonal(f64),
    #[error("singular values must be non-negative and non-increasing (violated at index {0})")]
    UnsortedSingularValues(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotSemidefinite(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterSpec<T> {
    /// Keeps singular indices `1..cutoff` (1-based); `cutoff` ranges over `1..=n+1`.
    Truncated { cutoff: usize },
    Tikhonov { beta: T },
    Exponential { t: T },
}

impl<T: Scalar> FilterSpec<T> {
    pub fn tikhonov(beta: T) -> Result<Self, FilterError> {
        if !(beta > T::zero()) || !beta.is_finite() {
            return Err(FilterError::InvalidParameter(format!("Tikhonov weight must be positive (got {beta})")));
        }
        Ok(Self::Tikhonov { beta })
    }

    pub fn exponential(t: T) -> Result<Self, FilterError> {
        if !(t > T::zero()) {
            return Err(FilterError::InvalidParameter(format!("artificial time must be positive (got {t})")));
        }
        Ok(Self::Exponential { t })
    }

    pub fn truncated(cutoff: usize) -> Result<Self, FilterError> {
        if cutoff == 0 {
            return Err(FilterError::InvalidParameter("truncation index is 1-based".into()));
        }
        Ok(Self::Truncated { cutoff })
    }
}

/// Filter weight for singular index `index` (1-based) with argument `s`.
///
/// The truncated filter looks only at the index; the others only at `s`.
pub fn filter_value<T: Scalar>(spec: &FilterSpec<T>, s: T, index: usize) -> Result<T, FilterError> {
    if s < T::zero() || s.is_nan() {
        return Err(FilterError::NegativeArgument(s.to_f64_lossy()));
    }
    Ok(match *spec {
        FilterSpec::Truncated { cutoff } => {
            if index < cutoff {
                T::one()
            } else {
                T::zero()
            }
        }
        FilterSpec::Tikhonov { beta } => {
            if s.is_infinite() {
                T::one()
            } else {
                s / (s + beta)
            }
        }
        // -expm1 keeps full relative accuracy for small t*s
        FilterSpec::Exponential { t } => -(-t * s).exp_m1(),
    })
}

/// Weight realized by `steps` forward-Euler steps of size `h` from zero: `1 - (1 - h s)^steps`.
pub fn euler_filter_value<T: Scalar>(h: T, steps: usize, s: T) -> T {
    let steps = i32::try_from(steps).expect("step count fits in i32");
    T::one() - (T::one() - h * s).powi(steps)
}

/// Which quantity the filter is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterArgument {
    /// `w(s_i)`: the filter of `dx/dt = b - A x` for SPD `A`.
    #[default]
    Plain,
    /// `w(s_i^2)`: the filter of the normal-equation flow `dx/dt = A^T (b - A x)`.
    Squared,
}

/// `A = U diag(sigma) U^T` together with the data vector `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdSystem<T> {
    u: DenseMatrix<T>,
    sigma: Vec<T>,
    b: Vec<T>,
}

fn orthogonality_tolerance<T: Scalar>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
}

impl<T: Scalar> SvdSystem<T> {
    pub fn new(u: DenseMatrix<T>, sigma: Vec<T>, b: Vec<T>) -> Result<Self, FilterError> {
        let n = u.rows();
        if !u.is_square() {
            return Err(FilterError::DimensionMismatch { expected: n, got: u.cols() });
        }
        for len in [sigma.len(), b.len()] {
            if len != n {
                return Err(FilterError::DimensionMismatch { expected: n, got: len });
            }
        }
        let utu = u.transpose().matmul(&u);
        let defect = utu.add(&DenseMatrix::identity(n).scale(-T::one())).max_abs();
        if defect > orthogonality_tolerance() {
            return Err(FilterError::NotOrthogonal(defect.to_f64_lossy()));
        }
        for (i, w) in sigma.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(FilterError::UnsortedSingularValues(i + 1));
            }
        }
        if let Some(i) = sigma.iter().position(|&s| s < T::zero() || s.is_nan()) {
            return Err(FilterError::UnsortedSingularValues(i));
        }
        Ok(Self { u, sigma, b })
    }

    /// Diagonal SPD system `diag(entries)`; `U` becomes the sorting permutation.
    pub fn diagonal(entries: &[T], b: Vec<T>) -> Result<Self, FilterError> {
        let n = entries.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| entries[j].partial_cmp(&entries[i]).unwrap_or(std::cmp::Ordering::Equal));
        let u = DenseMatrix::from_fn(n, n, |r, c| if order[c] == r { T::one() } else { T::zero() });
        let sigma = order.iter().map(|&i| entries[i]).collect();
        Self::new(u, sigma, b)
    }

    /// Decomposes a symmetric positive semidefinite matrix.
    pub fn from_spd(matrix: &DenseMatrix<T>, b: Vec<T>) -> Result<Self, FilterError> {
        let (values, vectors) = matrix.symmetric_eigen()?;
        let floor = -T::lit(64.0) * T::epsilon() * values.first().map_or(T::zero(), |v| v.abs());
        if let Some(&neg) = values.iter().find(|&&v| v < floor) {
            return Err(FilterError::NotSemidefinite(neg.to_f64_lossy()));
        }
        let sigma = values.into_iter().map(|v| v.max(T::zero())).collect();
        Self::new(vectors, sigma, b)
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn u(&self) -> &DenseMatrix<T> {
        &self.u
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    pub fn rhs(&self) -> &[T] {
        &self.b
    }

    /// Spectral coefficients `U^T b`.
    pub fn coefficients(&self) -> Vec<T> {
        self.u.tr_matvec(&self.b)
    }

    /// Unfiltered spectral solution `y_i = (U^T b)_i / s_i`.
    pub fn unfiltered_coefficients(&self) -> Result<Vec<T>, FilterError> {
        self.coefficients()
            .iter()
            .zip(&self.sigma)
            .enumerate()
            .map(|(i, (&c, &s))| {
                if s == T::zero() {
                    Err(FilterError::DivisionBarrier { index: i + 1, weight: 1.0 })
                } else {
                    Ok(c / s)
                }
            })
            .collect()
    }
}

impl<T: Scalar> LinearOperator<T> for SvdSystem<T> {
    fn dim(&self) -> usize {
        self.sigma.len()
    }

    fn apply_into(&self, v: &[T], out: &mut [T]) {
        let mut c = self.u.tr_matvec(v);
        c.iter_mut().zip(&self.sigma).for_each(|(ci, &s)| *ci *= s);
        out.copy_from_slice(&self.u.matvec(&c));
    }

    fn spectrum_hint(&self) -> Option<SpectrumHint<T>> {
        Some(SpectrumHint {
            lambda_min: *self.sigma.last()?,
            lambda_max: *self.sigma.first()?,
            provenance: Provenance::Analytic,
        })
    }
}

/// `x = U y` with `y_i = w(s_i) (U^T b)_i / s_i`.
pub fn filtered_solve<T: Scalar>(sys: &SvdSystem<T>, spec: &FilterSpec<T>) -> Result<Vec<T>, FilterError> {
    filtered_solve_with(sys, spec, FilterArgument::Plain)
}

pub fn filtered_solve_with<T: Scalar>(
    sys: &SvdSystem<T>,
    spec: &FilterSpec<T>,
    argument: FilterArgument,
) -> Result<Vec<T>, FilterError> {
    let coeffs = sys.coefficients();
    let mut y = Vec::with_capacity(sys.dim());
    for (i, (&c, &s)) in coeffs.iter().zip(&sys.sigma).enumerate() {
        let arg = match argument {
            FilterArgument::Plain => s,
            FilterArgument::Squared => s * s,
        };
        let w = filter_value(spec, arg, i + 1)?;
        if w == T::zero() {
            y.push(T::zero());
        } else if s == T::zero() {
            return Err(FilterError::DivisionBarrier { index: i + 1, weight: w.to_f64_lossy() });
        } else {
            y.push(w * c / s);
        }
    }
    Ok(sys.u.matvec(&y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerRealization<T> {
    pub x: Vec<T>,
    /// Constant step `t_final / steps`.
    pub h: T,
    /// `max |1 - h lambda|` over the extreme eigenvalues; above 1 means a growing mode.
    pub amplification: T,
    pub lambda_provenance: Provenance,
}

impl<T: Scalar> EulerRealization<T> {
    pub fn unstable(&self) -> bool {
        self.amplification > T::one()
    }
}

/// `steps` forward-Euler steps of `dx/dt = b - A x` from `x = 0` to `t_final`.
pub fn euler_filter_realization<T: Scalar, A: LinearOperator<T>>(
    op: &A,
    b: &[T],
    t_final: T,
    steps: usize,
) -> Result<EulerRealization<T>, FilterError> {
    if steps == 0 {
        return Err(FilterError::InvalidParameter("at least one Euler step is required".into()));
    }
    if !(t_final > T::zero()) {
        return Err(FilterError::InvalidParameter(format!("final time must be positive (got {t_final})")));
    }
    if b.len() != op.dim() {
        return Err(FilterError::DimensionMismatch { expected: op.dim(), got: b.len() });
    }
    let h = t_final / T::from_index(steps);
    let (lmax, provenance) = lambda_max(op, &PowerIterationConfig::default())?;
    let lmin = op.spectrum_hint().map_or(T::zero(), |s| s.lambda_min);
    let amplification = (T::one() - h * lmax).abs().max((T::one() - h * lmin).abs());
    let n = op.dim();
    let mut x = vec![T::zero(); n];
    let mut ax = vec![T::zero(); n];
    for _ in 0..steps {
        op.apply_into(&x, &mut ax);
        for ((xi, &bi), &axi) in x.iter_mut().zip(b).zip(&ax) {
            *xi += h * (bi - axi);
        }
    }
    Ok(EulerRealization { x, h, amplification, lambda_provenance: provenance })
}

/// Uniform grid of `points` samples on `[0, s_max]`, endpoints included.
pub fn sample_grid<T: Scalar>(s_max: T, points: usize) -> Vec<T> {
    match points {
        0 => Vec::new(),
        1 => vec![T::zero()],
        _ => {
            let last = T::from_index(points - 1);
            (0..points).map(|i| s_max * T::from_index(i) / last).collect()
        }
    }
}

/// `max |w_a(s) - w_b(s)|` over the sample points (index-based filters use index 1).
pub fn sup_difference<T: Scalar>(a: &FilterSpec<T>, b: &FilterSpec<T>, grid: &[T]) -> Result<T, FilterError> {
    grid.iter().try_fold(T::zero(), |m, &s| Ok(m.max((filter_value(a, s, 1)? - filter_value(b, s, 1)?).abs())))
}

/// One row of the filter-curve table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterCurvePoint<T> {
    pub s: T,
    pub omega_exp: T,
    pub omega_tik: T,
}

pub fn filter_curves<T: Scalar>(t: T, beta: T, grid: &[T]) -> Result<Vec<FilterCurvePoint<T>>, FilterError> {
    let exp = FilterSpec::exponential(t)?;
    let tik = FilterSpec::tikhonov(beta)?;
    grid.iter()
        .map(|&s| Ok(FilterCurvePoint { s, omega_exp: filter_value(&exp, s, 1)?, omega_tik: filter_value(&tik, s, 1)? }))
        .collect()
}

/// CSV with header `s,omega_exp,omega_tik`.
pub fn filter_curves_csv<T: Scalar>(points: &[FilterCurvePoint<T>]) -> String {
    let mut out = String::from("s,omega_exp,omega_tik\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{}",
            crate::descent::fmt17(p.s),
            crate::descent::fmt17(p.omega_exp),
            crate::descent::fmt17(p.omega_tik)
        );
    }
    out
}

/// `||x_a - x_b|| <= sup|w_a - w_b| * ||y_unfiltered||` bound, returned as (lhs, rhs).
pub fn filter_difference_bound<T: Scalar>(
    sys: &SvdSystem<T>,
    a: &FilterSpec<T>,
    b: &FilterSpec<T>,
) -> Result<(T, T), FilterError> {
    let xa = filtered_solve(sys, a)?;
    let xb = filtered_solve(sys, b)?;
    let diff: Vec<T> = xa.iter().zip(&xb).map(|(&p, &q)| p - q).collect();
    let y = sys.unfiltered_coefficients()?;
    let sup = sys
        .sigma()
        .iter()
        .enumerate()
        .try_fold(T::zero(), |m, (i, &s)| Ok::<T, FilterError>(m.max((filter_value(a, s, i + 1)? - filter_value(b, s, i + 1)?).abs())))?;
    Ok((norm2(&diff), sup * norm2(&y)))
}
