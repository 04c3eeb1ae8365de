//! SPD linear operators, the model Poisson grid and the quadratic objective
//! `f(x) = 1/2 x^T A x - b^T x` that every descent method minimizes.

use thiserror::Error;

use crate::linalg::{axpy, dot, norm2, DenseMatrix};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("grid needs at least one interior point per axis (got m = {0})")]
    EmptyGrid(usize),
    #[error("dimension mismatch: operator has dimension {expected}, vector has length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("power iteration did not converge within {max_iter} iterations")]
    PowerIterationNoConvergence { max_iter: usize },
    #[error("reference CG solve stalled after {iterations} iterations (relative residual {relres:e})")]
    ReferenceNoConvergence { iterations: usize, relres: f64 },
    #[error("reference CG breakdown: p^T A p = {0:e} is not positive; operator is not SPD")]
    NotPositiveDefinite(f64),
    #[error("tolerance must be positive (got {0})")]
    InvalidTolerance(f64),
}

/// Where a spectral bound came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumHint<T> {
    pub lambda_min: T,
    pub lambda_max: T,
    pub provenance: Provenance,
}

/// Action `v -> A v` of a symmetric positive definite matrix.
pub trait LinearOperator<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    /// Writes `A v` into `out`. Both slices have length [`dim`](Self::dim).
    fn apply_into(&self, v: &[T], out: &mut [T]);

    fn apply(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.apply_into(v, &mut out);
        out
    }

    /// Exact extreme eigenvalues, when the operator knows them.
    fn spectrum_hint(&self) -> Option<SpectrumHint<T>> {
        None
    }
}

impl<T: Scalar, A: LinearOperator<T> + ?Sized> LinearOperator<T> for &A {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply_into(&self, v: &[T], out: &mut [T]) {
        (**self).apply_into(v, out)
    }
    fn spectrum_hint(&self) -> Option<SpectrumHint<T>> {
        (**self).spectrum_hint()
    }
}

/// Uniform grid of `m x m` interior points on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    m: usize,
}

impl GridSpec {
    pub fn new(m: usize) -> Result<Self, OperatorError> {
        if m == 0 {
            return Err(OperatorError::EmptyGrid(m));
        }
        Ok(Self { m })
    }

    /// Interior points per axis.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Spatial step `1 / (m + 1)`.
    pub fn xi<T: Scalar>(&self) -> T {
        T::one() / T::from_index(self.m + 1)
    }

    /// Number of unknowns, `m^2`.
    pub fn unknowns(&self) -> usize {
        self.m * self.m
    }
}

/// Matrix-free `-Delta_h` with homogeneous Dirichlet data, scaled by `1/xi^2`.
///
/// Unknowns are ordered row-major over the interior points: index `row * m + col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Laplacian2d<T> {
    grid: GridSpec,
    inv_xi2: T,
}

pub fn laplacian_2d<T: Scalar>(grid: GridSpec) -> Laplacian2d<T> {
    let xi: T = grid.xi();
    Laplacian2d { grid, inv_xi2: (xi * xi).recip() }
}

impl<T: Scalar> Laplacian2d<T> {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// `lambda_ij = (4/xi^2) (sin^2(i pi xi / 2) + sin^2(j pi xi / 2))` for `1 <= i, j <= m`.
    pub fn eigenvalue(&self, i: usize, j: usize) -> T {
        let xi: T = self.grid.xi();
        let half = T::lit(0.5) * T::PI() * xi;
        let si = (T::from_index(i) * half).sin();
        let sj = (T::from_index(j) * half).sin();
        T::lit(4.0) * self.inv_xi2 * (si * si + sj * sj)
    }

    /// All `m^2` analytic eigenvalues, sorted in decreasing order.
    pub fn eigenvalues(&self) -> Vec<T> {
        let m = self.grid.m();
        let mut out: Vec<T> = (1..=m).flat_map(|i| (1..=m).map(move |j| (i, j))).map(|(i, j)| self.eigenvalue(i, j)).collect();
        out.sort_by(|a, b| b.partial_cmp(a).unwrap());
        out
    }

    /// Assembled dense matrix, for small-grid cross-checks.
    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.dim();
        let mut out = DenseMatrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        let mut col = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            self.apply_into(&e, &mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
            e[j] = T::zero();
        }
        out
    }
}

impl<T: Scalar> LinearOperator<T> for Laplacian2d<T> {
    fn dim(&self) -> usize {
        self.grid.unknowns()
    }

    fn apply_into(&self, v: &[T], out: &mut [T]) {
        let m = self.grid.m();
        assert_eq!(v.len(), m * m, "vector length does not match grid");
        assert_eq!(out.len(), m * m, "output length does not match grid");
        let four = T::lit(4.0);
        for row in 0..m {
            for col in 0..m {
                let idx = row * m + col;
                let mut acc = four * v[idx];
                if col > 0 {
                    acc -= v[idx - 1];
                }
                if col + 1 < m {
                    acc -= v[idx + 1];
                }
                if row > 0 {
                    acc -= v[idx - m];
                }
                if row + 1 < m {
                    acc -= v[idx + m];
                }
                out[idx] = acc * self.inv_xi2;
            }
        }
    }

    fn spectrum_hint(&self) -> Option<SpectrumHint<T>> {
        let m = self.grid.m();
        Some(SpectrumHint {
            lambda_min: self.eigenvalue(1, 1),
            lambda_max: self.eigenvalue(m, m),
            provenance: Provenance::Analytic,
        })
    }
}

/// Diagonal SPD operator. `Diagonal::identity(n)` is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagonal<T> {
    entries: Vec<T>,
}

impl<T: Scalar> Diagonal<T> {
    pub fn new(entries: Vec<T>) -> Self {
        Self { entries }
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: vec![T::one(); n] }
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }
}

impl<T: Scalar> LinearOperator<T> for Diagonal<T> {
    fn dim(&self) -> usize {
        self.entries.len()
    }

    fn apply_into(&self, v: &[T], out: &mut [T]) {
        for ((o, &d), &x) in out.iter_mut().zip(&self.entries).zip(v) {
            *o = d * x;
        }
    }

    fn spectrum_hint(&self) -> Option<SpectrumHint<T>> {
        let (lo, hi) = self
            .entries
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        (!self.entries.is_empty()).then_some(SpectrumHint { lambda_min: lo, lambda_max: hi, provenance: Provenance::Analytic })
    }
}

/// Dense symmetric matrix as an operator; no spectrum hint.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator<T> {
    matrix: DenseMatrix<T>,
}

impl<T: Scalar> DenseOperator<T> {
    pub fn new(matrix: DenseMatrix<T>) -> Self {
        assert!(matrix.is_square(), "operator matrix must be square");
        Self { matrix }
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }
}

impl<T: Scalar> LinearOperator<T> for DenseOperator<T> {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn apply_into(&self, v: &[T], out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.matrix.row(i), v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationConfig<T> {
    pub max_iter: usize,
    /// Relative change of the Rayleigh quotient accepted as converged.
    pub tol: T,
}

impl<T: Scalar> Default for PowerIterationConfig<T> {
    fn default() -> Self {
        Self { max_iter: 20_000, tol: T::lit(1e-12) }
    }
}

/// Largest eigenvalue by power iteration from a fixed, non-symmetric start vector.
pub fn power_iteration<T: Scalar, A: LinearOperator<T> + ?Sized>(
    op: &A,
    cfg: &PowerIterationConfig<T>,
) -> Result<T, OperatorError> {
    let n = op.dim();
    // golden-ratio sequence: deterministic and never orthogonal to a smooth mode by accident
    let mut v: Vec<T> = (0..n).map(|i| T::lit(1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())).collect();
    let s = norm2(&v).recip();
    v.iter_mut().for_each(|x| *x *= s);
    let mut av = vec![T::zero(); n];
    let mut lambda = T::zero();
    for _ in 0..cfg.max_iter {
        op.apply_into(&v, &mut av);
        let next = dot(&v, &av);
        let nrm = norm2(&av);
        if nrm == T::zero() {
            return Ok(T::zero());
        }
        if (next - lambda).abs() <= cfg.tol * next.abs() {
            return Ok(next);
        }
        lambda = next;
        for (vi, &a) in v.iter_mut().zip(&av) {
            *vi = a / nrm;
        }
    }
    Err(OperatorError::PowerIterationNoConvergence { max_iter: cfg.max_iter })
}

/// Largest eigenvalue with its provenance: the analytic hint when present,
/// otherwise a power-iteration estimate.
pub fn lambda_max<T: Scalar, A: LinearOperator<T> + ?Sized>(
    op: &A,
    cfg: &PowerIterationConfig<T>,
) -> Result<(T, Provenance), OperatorError> {
    match op.spectrum_hint() {
        Some(h) => Ok((h.lambda_max, h.provenance)),
        None => power_iteration(op, cfg).map(|l| (l, Provenance::Estimated)),
    }
}

/// Largest stable constant step for gradient descent / forward Euler: `2 / lambda_max`.
pub fn stability_bound<T: Scalar, A: LinearOperator<T> + ?Sized>(
    op: &A,
    cfg: &PowerIterationConfig<T>,
) -> Result<T, OperatorError> {
    lambda_max(op, cfg).map(|(l, _)| T::lit(2.0) / l)
}

/// `f(x) = 1/2 x^T A x - b^T x` with an optional cached optimal value.
#[derive(Debug, Clone)]
pub struct QuadraticObjective<T, A> {
    op: A,
    b: Vec<T>,
    fstar: Option<T>,
    /// `(x*, b - A x*)` when a reference solve has been attached.
    reference: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar, A: LinearOperator<T>> QuadraticObjective<T, A> {
    pub fn new(op: A, b: Vec<T>) -> Result<Self, OperatorError> {
        if b.len() != op.dim() {
            return Err(OperatorError::DimensionMismatch { expected: op.dim(), got: b.len() });
        }
        Ok(Self { op, b, fstar: None, reference: None })
    }

    pub fn operator(&self) -> &A {
        &self.op
    }

    pub fn rhs(&self) -> &[T] {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Cached `f(x*)`, set by [`attach_reference`](Self::attach_reference).
    pub fn fstar(&self) -> Option<T> {
        self.fstar
    }

    /// Sets `f(x*)` directly. Drops any attached reference point.
    pub fn set_fstar(&mut self, fstar: T) {
        self.fstar = Some(fstar);
        self.reference = None;
    }

    /// `f(x) - f(x*)` given `r = b - A x`.
    ///
    /// With a reference point attached this is `-1/2 (x - x*)^T (r + r*)`, which
    /// stays accurate once the gap falls below the rounding level of `f` itself.
    pub fn gap_with_residual(&self, x: &[T], r: &[T]) -> Option<T> {
        let fstar = self.fstar?;
        match &self.reference {
            Some((xs, rs)) => {
                let s: T = x.iter().zip(xs).zip(r.iter().zip(rs)).map(|((&xi, &xsi), (&ri, &rsi))| (xi - xsi) * (ri + rsi)).sum();
                Some(-T::lit(0.5) * s)
            }
            None => Some(self.value_with_residual(x, r) - fstar),
        }
    }

    pub fn residual(&self, x: &[T]) -> Vec<T> {
        let mut r = self.op.apply(x);
        for (ri, &bi) in r.iter_mut().zip(&self.b) {
            *ri = bi - *ri;
        }
        r
    }

    pub fn value(&self, x: &[T]) -> T {
        let r = self.residual(x);
        self.value_with_residual(x, &r)
    }

    /// `f(x)` from a known residual `r = b - A x`: `-1/2 x^T (b + r)`. Saves a matvec.
    pub fn value_with_residual(&self, x: &[T], r: &[T]) -> T {
        let s: T = x.iter().zip(&self.b).zip(r).map(|((&xi, &bi), &ri)| xi * (bi + ri)).sum();
        -T::lit(0.5) * s
    }

    /// Solves for `x*` and caches `f(x*)`.
    pub fn attach_reference(&mut self, tol: T) -> Result<ReferenceSolution<T>, OperatorError> {
        let sol = solve_reference(self, tol)?;
        self.fstar = Some(sol.fstar);
        self.reference = Some((sol.x.clone(), self.residual(&sol.x)));
        Ok(sol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution<T> {
    pub x: Vec<T>,
    pub fstar: T,
    pub iterations: usize,
}

/// Reference minimizer by conjugate gradients to `||b - A x|| <= tol ||b||`.
///
/// The iteration cap is `max(10 n, 1000)`; hitting it is an error, never a
/// partial answer.
pub fn solve_reference<T: Scalar, A: LinearOperator<T>>(
    obj: &QuadraticObjective<T, A>,
    tol: T,
) -> Result<ReferenceSolution<T>, OperatorError> {
    if !(tol > T::zero()) {
        return Err(OperatorError::InvalidTolerance(tol.to_f64_lossy()));
    }
    let n = obj.dim();
    let b = obj.rhs();
    let bnorm = norm2(b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok(ReferenceSolution { x, fstar: T::zero(), iterations: 0 });
    }
    let max_iter = (10 * n).max(1000);
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![T::zero(); n];
    let mut rr = dot(&r, &r);
    let target = tol * bnorm;
    let mut iterations = 0;
    while rr.sqrt() > target {
        if iterations == max_iter {
            let relres = norm2(&obj.residual(&x)) / bnorm;
            return Err(OperatorError::ReferenceNoConvergence { iterations, relres: relres.to_f64_lossy() });
        }
        obj.operator().apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(OperatorError::NotPositiveDefinite(pap.to_f64_lossy()));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;
        // periodic true-residual refresh keeps the recursion honest at tight tolerances
        if iterations % 50 == 0 {
            r = obj.residual(&x);
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, &ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    let r = obj.residual(&x);
    let true_r = norm2(&r);
    if true_r > target {
        return Err(OperatorError::ReferenceNoConvergence { iterations, relres: (true_r / bnorm).to_f64_lossy() });
    }
    let fstar = obj.value_with_residual(&x, &r);
    Ok(ReferenceSolution { x, fstar, iterations })
}
