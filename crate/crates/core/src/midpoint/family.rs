use crate::linalg::DenseMatrix;
use crate::Scalar;

use super::MidpointError;

/// A square matrix-valued function of time.
pub trait MatrixFamily<T: Scalar>: Sync {
    fn dim(&self) -> usize;

    fn at(&self, t: T) -> DenseMatrix<T>;

    /// Smallest known period, if the family is periodic.
    fn period(&self) -> Option<T> {
        None
    }
}

impl<T: Scalar, F: MatrixFamily<T> + ?Sized> MatrixFamily<T> for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn at(&self, t: T) -> DenseMatrix<T> {
        (**self).at(t)
    }

    fn period(&self) -> Option<T> {
        (**self).period()
    }
}

/// `A(t) = A`. Reports a period only when one is assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantFamily<T> {
    a: DenseMatrix<T>,
    period: Option<T>,
}

impl<T: Scalar> ConstantFamily<T> {
    pub fn new(a: DenseMatrix<T>) -> Self {
        assert!(a.is_square(), "constant family needs a square matrix");
        Self { a, period: None }
    }

    /// Treats the constant family as periodic with the given period.
    pub fn with_period(mut self, period: T) -> Self {
        self.period = Some(period);
        self
    }
}

impl<T: Scalar> MatrixFamily<T> for ConstantFamily<T> {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn at(&self, _t: T) -> DenseMatrix<T> {
        self.a.clone()
    }

    fn period(&self) -> Option<T> {
        self.period
    }
}

/// `A(t) = R(p t) B R(p t)^T` with `B = [[-1, c], [0, -1]]` and `R` a planar rotation.
///
/// Each `A(t)` has the double eigenvalue `-1`; the family has period `pi / p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatingJordan<T> {
    p: T,
    c: T,
}

impl<T: Scalar> RotatingJordan<T> {
    pub fn new(p: T, c: T) -> Result<Self, MidpointError> {
        if !(p > T::zero()) || !p.is_finite() || !c.is_finite() {
            return Err(MidpointError::InvalidProblem(format!("rotating family needs p > 0 and finite c, got p = {p}, c = {c}")));
        }
        Ok(Self { p, c })
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn c(&self) -> T {
        self.c
    }
}

impl<T: Scalar> MatrixFamily<T> for RotatingJordan<T> {
    fn dim(&self) -> usize {
        2
    }

    fn at(&self, t: T) -> DenseMatrix<T> {
        let (s, co) = (self.p * t).sin_cos();
        let c = self.c;
        // R B R^T expanded
        let a00 = -T::one() - c * s * co;
        let a01 = c * co * co;
        let a10 = -c * s * s;
        let a11 = -T::one() + c * s * co;
        DenseMatrix::from_rows(&[vec![a00, a01], vec![a10, a11]])
    }

    fn period(&self) -> Option<T> {
        Some(T::PI() / self.p)
    }
}
