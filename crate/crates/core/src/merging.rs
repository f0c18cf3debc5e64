//! First-order correction for two droplets merging.
//!
//! With `f = f₀(y) + e^{ατ}P(y)` about a lifting profile `f₀`, the symmetric
//! correction solves the linear equation
//! `2αP − αyP_y + (f₀^m P_yyy)_y + m(f₀^{m−1} f₀,yyy P)_y = 0`
//! and is matched to `P ∼ −b_drop y²` far out.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::lstsq;
use crate::integrator::{higher_derivatives, Trajectory};
use crate::model::ProfileState;
use crate::ode::{Dp5, Tolerances};

/// Fraction of `[y_start, y_match]` used for matching.
pub const MATCH_FRACTION: f64 = 0.2;
/// Target exponent of the growing mode at the default matching radius.
pub const MATCH_GROWTH: f64 = 12.0;
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSample {
    pub y: f64,
    pub p: f64,
    pub py: f64,
    pub pyy: f64,
    pub pyyy: f64,
}

#[derive(Debug, Clone)]
pub struct CorrectionProblem<'a> {
    pub base: &'a Trajectory,
    pub b_drop: f64,
    /// Defaults to [`default_match_radius`].
    pub y_match: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSolution {
    pub b_drop: f64,
    pub y_match: f64,
    pub p0: f64,
    pub pyy0: f64,
    pub samples: Vec<CorrectionSample>,
    pub window: (f64, f64),
    /// `|P/y² + b_drop|` at `y_match`.
    pub residual: f64,
    /// Maximum of `|P/y² + b_drop|` over the matching window.
    pub window_residual: f64,
    pub condition: f64,
    /// Largest magnitude reached by the zero-data solution.
    pub null_drift: f64,
}

/// `P_yyyy` from the correction equation.
pub fn correction_rhs(m: f64, alpha: f64, base: &ProfileState, p: &[f64; 4]) -> f64 {
    let (f, fy, f3) = (base.f, base.fy, base.fyyy);
    let (f4, _) = higher_derivatives(base, m, alpha);
    let fm = f.powf(m);
    let fm1 = fm / f;
    let fm2 = fm1 / f;
    let [q, qy, _, qyyy] = *p;
    (-2.0 * alpha * q + alpha * base.y * qy
        - m * fm1 * fy * qyyy
        - m * ((m - 1.0) * fm2 * fy * f3 * q + fm1 * f4 * q + fm1 * f3 * qy))
        / fm
}

/// Taylor data of the symmetric solution with `P(0) = p0`, `P_yy(0) = pyy0`.
pub fn correction_seed(m: f64, alpha: f64, kappa: f64, p0: f64, pyy0: f64, y: f64) -> [f64; 4] {
    let f4 = -alpha;
    let f6 = alpha * kappa * (1.0 + 3.0 * m);
    let p4 = (m - 2.0) * alpha * p0;
    let p6 = -3.0 * m * kappa * p4 - m * f6 * p0 - 3.0 * m * f4 * pyy0 - 3.0 * m * (m - 1.0) * kappa * f4 * p0;
    let y2 = y * y;
    [
        p0 + y2 * (pyy0 / 2.0 + y2 * (p4 / 24.0 + y2 * p6 / 720.0)),
        y * (pyy0 + y2 * (p4 / 6.0 + y2 * p6 / 120.0)),
        pyy0 + y2 * (p4 / 2.0 + y2 * p6 / 24.0),
        y * (p4 + y2 * p6 / 6.0),
    ]
}

/// Radius where the growing homogeneous mode has amplified by about `e^12`.
pub fn default_match_radius(base: &Trajectory, a: f64) -> f64 {
    let m = base.cfg.m;
    let rate = base.cfg.alpha.cbrt() * a.powf(-m / 3.0) * 3.0 / (4.0 - m);
    let y = (MATCH_GROWTH / rate).powf(3.0 / (4.0 - m));
    y.min(base.y_end)
}

fn integrate_family<const N: usize>(
    base: &Trajectory,
    seeds: &[(f64, f64)],
    y_end: f64,
) -> Result<Vec<(f64, [f64; N])>> {
    assert_eq!(N, 4 * seeds.len());
    let cfg = &base.cfg;
    let (m, alpha) = (cfg.m, cfg.alpha);
    let y0 = cfg.y_start;
    let mut init = [0.0; N];
    for (k, &(p0, pyy0)) in seeds.iter().enumerate() {
        init[4 * k..4 * k + 4].copy_from_slice(&correction_seed(m, alpha, base.kappa, p0, pyy0, y0));
    }
    let rhs = |y: f64, v: &[f64; N]| -> Option<[f64; N]> {
        let s = base.state_at(y)?;
        let mut out = [0.0; N];
        for k in 0..N / 4 {
            let p = [v[4 * k], v[4 * k + 1], v[4 * k + 2], v[4 * k + 3]];
            out[4 * k] = p[1];
            out[4 * k + 1] = p[2];
            out[4 * k + 2] = p[3];
            out[4 * k + 3] = correction_rhs(m, alpha, &s, &p);
        }
        out.iter().all(|x| x.is_finite()).then_some(out)
    };
    let tol = Tolerances { rtol: cfg.rtol, atol: cfg.atol, h_max: f64::INFINITY, h_min: 0.0 };
    let mut stepper = Dp5::new(rhs, y0, init, tol).ok_or(Error::NonFinite { y: y0 })?;
    let mut out = vec![(y0, init)];
    while stepper.t() < y_end {
        let step = stepper.step(y_end).map_err(|_| Error::NonFinite { y: stepper.t() })?;
        out.push((step.t1(), step.y1));
    }
    Ok(out)
}

/// Integrates a single symmetric solution out to `y_end`.
pub fn integrate_correction(base: &Trajectory, p0: f64, pyy0: f64, y_end: f64) -> Result<Vec<CorrectionSample>> {
    check_range(base, y_end)?;
    let rows = integrate_family::<4>(base, &[(p0, pyy0)], y_end)?;
    Ok(rows.into_iter().map(|(y, v)| sample(y, &v, 0)).collect())
}

fn sample<const N: usize>(y: f64, v: &[f64; N], k: usize) -> CorrectionSample {
    CorrectionSample { y, p: v[4 * k], py: v[4 * k + 1], pyy: v[4 * k + 2], pyyy: v[4 * k + 3] }
}

fn check_range(base: &Trajectory, y_end: f64) -> Result<()> {
    let m = base.cfg.m;
    if !(m < 4.0) {
        return Err(Error::Precondition("merging correction requires m < 4".into()));
    }
    if !(y_end > base.cfg.y_start && y_end <= base.y_end) {
        return Err(Error::Precondition(format!(
            "matching radius {y_end} outside the base profile range ({}, {}]",
            base.cfg.y_start, base.y_end
        )));
    }
    Ok(())
}

pub fn solve_correction(problem: &CorrectionProblem, a: f64) -> Result<CorrectionSolution> {
    let base = problem.base;
    let b = problem.b_drop;
    if !b.is_finite() {
        return Err(Error::Config(format!("b_drop = {b} must be finite")));
    }
    let y_match = problem.y_match.unwrap_or_else(|| default_match_radius(base, a));
    check_range(base, y_match)?;
    let rows = integrate_family::<12>(base, &[(1.0, 0.0), (0.0, 1.0), (0.0, 0.0)], y_match)?;
    let null_drift = rows
        .iter()
        .flat_map(|(_, v)| v[8..12].iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()));

    let y_lo = y_match - MATCH_FRACTION * (y_match - base.cfg.y_start);
    let window: Vec<&(f64, [f64; 12])> = rows.iter().filter(|(y, _)| *y >= y_lo).collect();
    if window.len() < 4 {
        return Err(Error::WindowTooShort { usable: window.len(), needed: 4 });
    }
    // rows: P/y² + b = 0 and y (P/y²)_y = 0
    let n = window.len();
    let design = DMatrix::from_fn(2 * n, 2, |i, j| {
        let (y, v) = window[i / 2];
        let (p, py) = (v[4 * j], v[4 * j + 1]);
        if i % 2 == 0 { p / (y * y) } else { py / y - 2.0 * p / (y * y) }
    });
    let rhs = DVector::from_fn(2 * n, |i, _| if i % 2 == 0 { -b } else { 0.0 });
    let sol = if b == 0.0 {
        None
    } else {
        Some(lstsq(&design, &rhs).ok_or(Error::BasisDegenerate { condition: f64::INFINITY })?)
    };
    let condition = match &sol {
        Some(s) => s.condition,
        None => lstsq(&design, &DVector::from_element(2 * n, 1.0)).map_or(f64::INFINITY, |s| s.condition),
    };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::BasisDegenerate { condition });
    }
    let (c1, c2) = sol.map_or((0.0, 0.0), |s| (s.coef[0], s.coef[1]));
    let samples: Vec<CorrectionSample> = rows
        .iter()
        .map(|(y, v)| {
            let (s1, s2) = (sample(*y, v, 0), sample(*y, v, 1));
            CorrectionSample {
                y: *y,
                p: c1 * s1.p + c2 * s2.p,
                py: c1 * s1.py + c2 * s2.py,
                pyy: c1 * s1.pyy + c2 * s2.pyy,
                pyyy: c1 * s1.pyyy + c2 * s2.pyyy,
            }
        })
        .collect();
    let misfit = |s: &CorrectionSample| (s.p / (s.y * s.y) + b).abs();
    let last = samples.last().expect("nonempty");
    let window_residual = samples.iter().filter(|s| s.y >= y_lo).map(misfit).fold(0.0, f64::max);
    Ok(CorrectionSolution {
        b_drop: b,
        y_match,
        p0: c1,
        pyy0: c2,
        residual: misfit(last),
        window_residual,
        window: (y_lo, y_match),
        condition,
        null_drift,
        samples,
    })
}

impl CorrectionSolution {
    /// Interpolated `P` by cubic Hermite on `(P, P_y)`.
    pub fn p_at(&self, y: f64) -> Option<f64> {
        let s = &self.samples;
        if !(y >= s.first()?.y && y <= s.last()?.y) {
            return None;
        }
        let i = s.partition_point(|r| r.y <= y).saturating_sub(1).min(s.len().saturating_sub(2));
        let (l, r) = (&s[i], &s[(i + 1).min(s.len() - 1)]);
        let h = r.y - l.y;
        if h == 0.0 {
            return Some(l.p);
        }
        let t = (y - l.y) / h;
        let (t2, t3) = (t * t, t * t * t);
        Some(
            (2.0 * t3 - 3.0 * t2 + 1.0) * l.p
                + (t3 - 2.0 * t2 + t) * h * l.py
                + (-2.0 * t3 + 3.0 * t2) * r.p
                + (t3 - t2) * h * r.py,
        )
    }
}
