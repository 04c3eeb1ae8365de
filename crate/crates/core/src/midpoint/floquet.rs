//! Growth over one period of a periodic linear system, two ways.

use crate::linalg::{norm2, DenseMatrix, LinalgError};
use crate::Scalar;

use super::{MatrixFamily, MidpointError};

/// Which linear system to integrate for a given family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetOde<T> {
    /// `u' = omega A(t) u`
    Original { omega: T },
    /// `v' = gamma^{-1} A(t)^{-1} v`
    Ghost { gamma: T },
}

impl<T: Scalar> TargetOde<T> {
    fn matrix<F: MatrixFamily<T>>(&self, family: &F, t: T) -> Result<DenseMatrix<T>, MidpointError> {
        match *self {
            TargetOde::Original { omega } => Ok(family.at(t).scale(omega)),
            TargetOde::Ghost { gamma } => family
                .at(t)
                .inverse()
                .map(|inv| inv.scale(gamma.recip()))
                .map_err(|e| match e {
                    LinalgError::Singular { .. } => MidpointError::SingularMatrix { t: t.to_f64_lossy() },
                    other => MidpointError::InvalidProblem(other.to_string()),
                }),
        }
    }
}

/// Per-period growth: `log_rho` is the log of the Floquet multiplier modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetEstimate<T> {
    pub log_rho: T,
    pub period: T,
}

impl<T: Scalar> FloquetEstimate<T> {
    pub fn rho(&self) -> T {
        self.log_rho.exp()
    }

    /// Growth rate per unit time.
    pub fn exponent(&self) -> T {
        self.log_rho / self.period
    }
}

fn combine<T: Scalar>(base: &DenseMatrix<T>, s: T, k: &DenseMatrix<T>) -> DenseMatrix<T> {
    base.add(&k.scale(s))
}

/// Spectral radius of the monodromy matrix, integrated over one period by
/// classical RK4 with `steps` equal steps. The product is renormalized every
/// step so strongly decaying or growing systems do not under- or overflow.
pub fn monodromy<T: Scalar, F: MatrixFamily<T>>(
    family: &F,
    target: TargetOde<T>,
    steps: usize,
) -> Result<FloquetEstimate<T>, MidpointError> {
    let period = family.period().ok_or(MidpointError::NotPeriodic)?;
    if steps == 0 {
        return Err(MidpointError::InvalidProblem("monodromy needs at least one step".into()));
    }
    let h = period / T::from_index(steps);
    let half = h / T::lit(2.0);
    let mut phi = DenseMatrix::identity(family.dim());
    let mut log_scale = T::zero();
    let mut m0 = target.matrix(family, T::zero())?;
    for k in 0..steps {
        let t = T::from_index(k) * h;
        let mm = target.matrix(family, t + half)?;
        let m1 = target.matrix(family, t + h)?;
        let k1 = m0.matmul(&phi);
        let k2 = mm.matmul(&combine(&phi, half, &k1));
        let k3 = mm.matmul(&combine(&phi, half, &k2));
        let k4 = m1.matmul(&combine(&phi, h, &k3));
        let incr = k1.add(&k2.scale(T::lit(2.0))).add(&k3.scale(T::lit(2.0))).add(&k4);
        phi = combine(&phi, h / T::lit(6.0), &incr);
        let s = phi.max_abs();
        if !s.is_finite() || s == T::zero() {
            return Err(MidpointError::NonFinite { t: (t + h).to_f64_lossy() });
        }
        phi = phi.scale(s.recip());
        log_scale += s.ln();
        m0 = m1;
    }
    let log_rho = phi.log_spectral_radius().map_err(|e| MidpointError::InvalidProblem(e.to_string()))?;
    Ok(FloquetEstimate { log_rho: log_scale + log_rho, period })
}

/// Long-run growth of a single solution from `u0` over `periods` periods, RK4
/// with `steps_per_period` steps each.
///
/// The state is renormalized after every step and the per-period
/// growth is the least-squares slope of the accumulated `log ||u||` over the
/// second half of the run, after non-dominant modes have died out.
pub fn amplitude_fit<T: Scalar, F: MatrixFamily<T>>(
    family: &F,
    target: TargetOde<T>,
    u0: &[T],
    steps_per_period: usize,
    periods: usize,
) -> Result<FloquetEstimate<T>, MidpointError> {
    let period = family.period().ok_or(MidpointError::NotPeriodic)?;
    if u0.len() != family.dim() {
        return Err(MidpointError::DimensionMismatch { expected: family.dim(), got: u0.len() });
    }
    if steps_per_period == 0 || periods < 4 {
        return Err(MidpointError::InvalidProblem("amplitude fit needs steps_per_period >= 1 and periods >= 4".into()));
    }
    let n0 = norm2(u0);
    if n0 == T::zero() {
        return Err(MidpointError::InvalidProblem("amplitude fit needs a nonzero start vector".into()));
    }
    let h = period / T::from_index(steps_per_period);
    let half = h / T::lit(2.0);
    let mut u: Vec<T> = u0.iter().map(|&x| x / n0).collect();
    let mut logs = Vec::with_capacity(periods + 1);
    let mut acc = T::zero();
    logs.push(acc);
    let mut m0 = target.matrix(family, T::zero())?;
    for j in 0..periods {
        for k in 0..steps_per_period {
            // periodicity lets every period reuse the same local times
            let t = T::from_index(k) * h;
            let mm = target.matrix(family, t + half)?;
            let m1 = target.matrix(family, t + h)?;
            let k1 = m0.matvec(&u);
            let k2 = mm.matvec(&shift(&u, half, &k1));
            let k3 = mm.matvec(&shift(&u, half, &k2));
            let k4 = m1.matvec(&shift(&u, h, &k3));
            for i in 0..u.len() {
                u[i] += h / T::lit(6.0) * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
            }
            m0 = m1;
            let nrm = norm2(&u);
            if !nrm.is_finite() || nrm == T::zero() {
                return Err(MidpointError::NonFinite { t: (T::from_index(j) * period + t + h).to_f64_lossy() });
            }
            acc += nrm.ln();
            for x in &mut u {
                *x /= nrm;
            }
        }
        logs.push(acc);
    }
    let start = periods / 2;
    let pts: Vec<(T, T)> = (start..=periods).map(|j| (T::from_index(j), logs[j])).collect();
    Ok(FloquetEstimate { log_rho: slope(&pts), period })
}

fn shift<T: Scalar>(u: &[T], s: T, k: &[T]) -> Vec<T> {
    u.iter().zip(k).map(|(&a, &b)| a + s * b).collect()
}

fn slope<T: Scalar>(pts: &[(T, T)]) -> T {
    let n = T::from_index(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: T = pts.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midpoint::{ConstantFamily, RotatingJordan};

    #[test]
    fn constant_family_monodromy_is_matrix_exponential() {
        let fam = ConstantFamily::new(DenseMatrix::from_rows(&[vec![-1.0f64, 0.0], vec![0.0, -3.0]])).with_period(2.0);
        let est = monodromy(&fam, TargetOde::Original { omega: 1.0 }, 2000).unwrap();
        assert!((est.log_rho + 2.0).abs() < 1e-10);
        let ghost = monodromy(&fam, TargetOde::Ghost { gamma: 0.5 }, 2000).unwrap();
        // ghost eigenvalues -2 and -2/3; dominant multiplier exp(-4/3)
        assert!((ghost.log_rho + 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn rotating_family_matches_rotating_frame_exponents() {
        // in the rotating frame the system has constant matrix omega B - p J
        let (p, c) = (1.5, 3.0);
        let fam = RotatingJordan::new(p, c).unwrap();
        let period = std::f64::consts::PI / p;
        let ghost = monodromy(&fam, TargetOde::Ghost { gamma: 1.0 }, 10_000).unwrap();
        let expect = (-1.0 + (p * c - p * p).sqrt()) * period;
        assert!((ghost.log_rho - expect).abs() < 1e-8, "{} vs {}", ghost.log_rho, expect);
        let fit = amplitude_fit(&fam, TargetOde::Ghost { gamma: 1.0 }, &[1.0, 1.0], 2000, 100).unwrap();
        assert!((fit.log_rho - expect).abs() < 1e-6, "{} vs {}", fit.log_rho, expect);
    }

    #[test]
    fn needs_a_period() {
        let fam = ConstantFamily::new(DenseMatrix::identity(2));
        assert_eq!(monodromy(&fam, TargetOde::Original { omega: 1.0_f64 }, 10), Err(MidpointError::NotPeriodic));
    }
}
