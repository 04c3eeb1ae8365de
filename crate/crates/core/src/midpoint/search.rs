//! Parameter scan for families whose original system decays while the ghost grows.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descent::fmt17;
use crate::linalg::norm2;
use crate::Scalar;

use super::{amplitude_fit, integrate, monodromy, FloquetEstimate, MatrixFamily, MidpointError, MidpointProblem, TargetOde};

pub const SEARCH_HEADER: &str = "p,c,gamma,rho_orig,rho_ghost,midpoint_amp_h,midpoint_amp_h2,midpoint_amp_h4,flag";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid<T> {
    pub p: Vec<T>,
    pub c: Vec<T>,
}

impl Default for SearchGrid<f64> {
    fn default() -> Self {
        Self { p: vec![0.5, 1.0, 1.5, 2.0], c: vec![0.0, 1.0, 2.0, 3.0, 4.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Midpoint steps per period at the coarsest ray level.
    pub base_steps_per_period: usize,
    /// Length of each midpoint run, in periods.
    pub periods: usize,
    /// Number of `(h, omega) -> (h/2, 4 omega)` levels, including the base.
    pub ray_levels: usize,
    /// RK4 steps per period for the monodromy matrix.
    pub monodromy_steps: usize,
    /// RK4 steps per period for the amplitude fit.
    pub fit_steps_per_period: usize,
    pub fit_periods: usize,
    /// A multiplier counts as growing above `1 + margin`.
    pub margin: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            base_steps_per_period: 16,
            periods: 4,
            ray_levels: 3,
            monodromy_steps: 10_000,
            fit_steps_per_period: 2_000,
            fit_periods: 400,
            margin: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimates<T> {
    /// Original system at the base `omega`: monodromy and amplitude fit.
    pub orig: FloquetEstimate<T>,
    pub orig_fit: FloquetEstimate<T>,
    pub ghost: FloquetEstimate<T>,
    pub ghost_fit: FloquetEstimate<T>,
    /// `||u_N|| / ||u_0||` at each ray level, coarsest first.
    pub midpoint_amps: Vec<T>,
    /// Base-level `omega`.
    pub omega: T,
    pub flag: bool,
}

impl<T: Scalar> PointEstimates<T> {
    /// Original multiplier at most `1 + margin` while the ghost one exceeds it.
    pub fn ghost_only_unstable(&self, margin: T) -> bool {
        self.orig.rho() <= T::one() + margin && self.ghost.rho() > T::one() + margin
    }

    /// Largest relative disagreement between the two growth estimators,
    /// `|a - b| / max(1, |a|, |b|)` on `log rho`, over both systems.
    pub fn estimator_gap(&self) -> T {
        let gap = |a: &FloquetEstimate<T>, b: &FloquetEstimate<T>| {
            (a.log_rho - b.log_rho).abs() / T::one().max(a.log_rho.abs()).max(b.log_rho.abs())
        };
        gap(&self.orig, &self.orig_fit).max(gap(&self.ghost, &self.ghost_fit))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchPoint<T> {
    pub p: T,
    pub c: T,
    pub gamma: T,
    pub estimates: Result<PointEstimates<T>, MidpointError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport<T> {
    pub points: Vec<SearchPoint<T>>,
}

impl<T: Scalar> SearchReport<T> {
    pub fn witnesses(&self) -> impl Iterator<Item = &SearchPoint<T>> {
        self.points.iter().filter(|p| p.estimates.as_ref().is_ok_and(|e| e.flag))
    }

    pub fn failures(&self) -> impl Iterator<Item = &SearchPoint<T>> {
        self.points.iter().filter(|p| p.estimates.is_err())
    }

    /// Failed points keep their parameters, leave numbers empty and print `error` as the flag.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SEARCH_HEADER);
        out.push('\n');
        for pt in &self.points {
            let _ = write!(out, "{},{},{}", fmt17(pt.p), fmt17(pt.c), fmt17(pt.gamma));
            match &pt.estimates {
                Ok(e) => {
                    let amp = |i: usize| e.midpoint_amps.get(i).map(|&a| fmt17(a)).unwrap_or_default();
                    let _ = writeln!(
                        out,
                        ",{},{},{},{},{},{}",
                        fmt17(e.orig.rho()),
                        fmt17(e.ghost.rho()),
                        amp(0),
                        amp(1),
                        amp(2),
                        e.flag
                    );
                }
                Err(_) => out.push_str(",,,,,,error\n"),
            }
        }
        out
    }
}

/// Scans `make(p, c)` over the grid at fixed `gamma`.
///
/// For each point: Floquet growth of the original system at the base
/// `omega = 4 gamma / h^2` and of the ghost system, each by monodromy and by a
/// long-run amplitude fit, plus midpoint amplification at each level of the
/// ray `(h, omega) -> (h/2, 4 omega)`. A point is flagged when the original
/// multiplier is at most `1 + margin`, the ghost multiplier exceeds
/// `1 + margin`, and the midpoint amplification exceeds `1 + margin` at every
/// level without decreasing from one level to the next.
pub fn instability_search<T, F, M>(
    make: M,
    gamma: T,
    grid: &SearchGrid<T>,
    cfg: &SearchConfig,
) -> Result<SearchReport<T>, MidpointError>
where
    T: Scalar,
    F: MatrixFamily<T>,
    M: Fn(T, T) -> Result<F, MidpointError> + Sync,
{
    if !(gamma > T::zero()) {
        return Err(MidpointError::InvalidProblem(format!("gamma must be positive, got {gamma}")));
    }
    if cfg.ray_levels == 0 || cfg.base_steps_per_period == 0 || cfg.periods == 0 {
        return Err(MidpointError::InvalidProblem("search needs at least one ray level, step and period".into()));
    }
    let params: Vec<(T, T)> = grid.p.iter().flat_map(|&p| grid.c.iter().map(move |&c| (p, c))).collect();
    let points = params
        .into_par_iter()
        .map(|(p, c)| SearchPoint { p, c, gamma, estimates: make(p, c).and_then(|fam| evaluate(&fam, gamma, cfg)) })
        .collect();
    Ok(SearchReport { points })
}

fn evaluate<T: Scalar, F: MatrixFamily<T>>(fam: &F, gamma: T, cfg: &SearchConfig) -> Result<PointEstimates<T>, MidpointError> {
    let period = fam.period().ok_or(MidpointError::NotPeriodic)?;
    let n = fam.dim();
    // (1, 2, ..., n) normalized; avoids the eigenvectors of symmetric members
    let raw: Vec<T> = (1..=n).map(T::from_index).collect();
    let u0: Vec<T> = raw.iter().map(|&x| x / norm2(&raw)).collect();
    let h0 = period / T::from_index(cfg.base_steps_per_period);
    let omega = T::lit(4.0) * gamma / (h0 * h0);

    let orig_t = TargetOde::Original { omega };
    let ghost_t = TargetOde::Ghost { gamma };
    let orig = monodromy(fam, orig_t, cfg.monodromy_steps)?;
    let orig_fit = amplitude_fit(fam, orig_t, &u0, cfg.fit_steps_per_period, cfg.fit_periods)?;
    let ghost = monodromy(fam, ghost_t, cfg.monodromy_steps)?;
    let ghost_fit = amplitude_fit(fam, ghost_t, &u0, cfg.fit_steps_per_period, cfg.fit_periods)?;

    let t_final = period * T::from_index(cfg.periods);
    let mut midpoint_amps = Vec::with_capacity(cfg.ray_levels);
    for level in 0..cfg.ray_levels {
        let h = h0 / T::lit(2.0).powi(level as i32);
        let prob = MidpointProblem::on_ray(gamma, fam, t_final, h)?;
        midpoint_amps.push(integrate(&prob, &u0)?.amplification());
    }

    let one = T::one() + T::lit(cfg.margin);
    let grows = midpoint_amps.iter().all(|&a| a > one) && midpoint_amps.windows(2).all(|w| w[1] >= w[0]);
    let flag = orig.rho() <= one && ghost.rho() > one && grows;
    Ok(PointEstimates { orig, orig_fit, ghost, ghost_fit, midpoint_amps, omega, flag })
}
