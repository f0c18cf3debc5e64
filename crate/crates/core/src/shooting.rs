//! Bisection on `κ`, far-field slope, dissipation integral and the
//! double-exponential rate fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Probe, Result};
use crate::fit::{intercept_fit, line_fit, LineFit};
use crate::farfield::{continue_between, from_deviation, to_deviation, Continuation};
use crate::integrator::{integrate_with, IntegrateOptions, Sample, TerminalEvent, Trajectory, Verdict};
use crate::model::{to_phase, ProblemConfig};
use crate::quadrature::adaptive_simpson;

pub const DEFAULT_KAPPA_TOL: f64 = 1e-10;
/// Relative phase-space separation of the flanking trajectories that ends the trusted range.
pub const DEFAULT_TRUST_TOL: f64 = 1e-8;
const MAX_BRACKET_PROBES: usize = 64;

/// Upper end `√(12α)` of the proven bracket.
pub fn kappa_ceiling(cfg: &ProblemConfig) -> f64 {
    (12.0 * cfg.alpha).sqrt()
}

fn probe_options() -> IntegrateOptions {
    IntegrateOptions::default()
}

pub fn probe(kappa: f64, cfg: &ProblemConfig) -> Result<(Probe, Verdict)> {
    let t = integrate_with(kappa, cfg, &probe_options())?;
    Ok((Probe { kappa, event: t.event, y: t.y_end }, t.verdict()))
}

#[cfg(feature = "parallel")]
fn map_kappas<T: Send>(kappas: &[f64], f: impl Fn(f64) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    kappas.par_iter().map(|&k| f(k)).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_kappas<T>(kappas: &[f64], f: impl Fn(f64) -> T) -> Vec<T> {
    kappas.iter().map(|&k| f(k)).collect()
}

/// Integrates every `κ` independently, concurrently when the `parallel` feature is on.
pub fn scan(kappas: &[f64], cfg: &ProblemConfig, opts: &IntegrateOptions) -> Vec<Result<Trajectory>> {
    map_kappas(kappas, |k| integrate_with(k, cfg, opts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub probes: Vec<Probe>,
}

/// Inward scan from both ends of `(0, √(12α))` at geometric offsets `2^{−j}`.
pub fn bracket_scan(cfg: &ProblemConfig) -> Result<Bracket> {
    cfg.validate()?;
    let top = kappa_ceiling(cfg);
    let mut probes = Vec::new();
    let mut minus: Vec<f64> = Vec::new();
    let mut plus: Vec<f64> = Vec::new();
    let mut j = 1;
    while probes.len() < MAX_BRACKET_PROBES && j < 60 {
        let off = top * 0.5f64.powi(j);
        let ks: Vec<f64> = if j == 1 { vec![off] } else { vec![off, top - off] };
        for (k, r) in ks.iter().zip(map_kappas(&ks, |k| probe(k, cfg))) {
            let (p, v) = r?;
            probes.push(p);
            match v {
                Verdict::Minus => minus.push(*k),
                Verdict::Plus => plus.push(*k),
                Verdict::Undecided => {}
            }
        }
        let lo = minus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let hi = plus.iter().copied().filter(|&h| h > lo).fold(f64::INFINITY, f64::min);
        if lo.is_finite() && hi.is_finite() {
            return Ok(Bracket { lo, hi, probes });
        }
        j += 1;
    }
    Err(Error::BracketNotFound { scan: probes })
}

pub fn bracket(cfg: &ProblemConfig) -> Result<(f64, f64)> {
    bracket_scan(cfg).map(|b| (b.lo, b.hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootOptions {
    pub kappa_tol: f64,
    pub trust_tol: f64,
    /// Number of `y_max` doublings tried on an undecided midpoint.
    pub max_widen: u32,
    /// Extra output points for the accepted trajectory.
    pub outputs: Vec<f64>,
    /// Whether the far field beyond the trusted radius is continued between the flanks.
    pub continue_far_field: bool,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            kappa_tol: DEFAULT_KAPPA_TOL,
            trust_tol: DEFAULT_TRUST_TOL,
            max_widen: 4,
            outputs: Vec::new(),
            continue_far_field: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub a: f64,
    /// `max − min` of `f/y` over the window.
    pub spread: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dissipation {
    /// `quadrature + tail`.
    pub value: f64,
    pub quadrature: f64,
    pub tail: f64,
    pub quadrature_error: f64,
    /// `∫₀^{y_end} (α/2 f_y² + f^m f_yyy²) dy`, which must equal `E1(y_end)`.
    pub energy_integral: f64,
    pub e1_end: f64,
}

impl Dissipation {
    pub fn energy_mismatch(&self) -> f64 {
        (self.energy_integral - self.e1_end).abs() / self.e1_end.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    pub k0_theory: f64,
    /// Prefactor with the exponent pinned at `(4 − m)/3`.
    pub k0_fitted: f64,
    /// Decay prefactor of the linearisation, `(3/2)(4 − m)^{−4/3} a^{−m/3}`.
    pub k0_linearized: f64,
    pub exponent_theory: f64,
    /// Free slope of `ln(−ln r)` against `ln y`.
    pub exponent_fitted: f64,
    pub window: (f64, f64),
    pub samples: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    pub kappa_star: f64,
    pub a: f64,
    pub slope: SlopeEstimate,
    pub dissipation: Dissipation,
    pub rate_fit: Option<AsymptoticFit>,
    pub iterations: usize,
    pub initial_bracket: (f64, f64),
    pub history: Vec<Probe>,
    /// Radius up to which plain shooting is resolved.
    pub y_trust: Option<f64>,
    /// Largest `y_max` used while deciding midpoints.
    pub y_max_decide: f64,
    pub flags: Vec<String>,
    pub continuation: Option<ContinuationStats>,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContinuationStats {
    pub stages: usize,
    /// Trial integrations spent bisecting between the flanks.
    pub flights: usize,
}

pub fn shoot(cfg: &ProblemConfig, kappa_tol: f64) -> Result<ShootingResult> {
    shoot_with(cfg, &ShootOptions { kappa_tol, ..Default::default() })
}

/// Distance `max(|ΔW|, |ΔQ|, |ΔZ|)` of two trajectories at `y`, relative to
/// the deviation `max(|W − 1|, |Q|, |Z|)` of the first.
fn phase_gap(a: &Trajectory, b: &Trajectory, y: f64, m: f64) -> Option<f64> {
    let pa = to_phase(&a.state_at(y)?, m).ok()?;
    let pb = to_phase(&b.state_at(y)?, m).ok()?;
    let gap = (pa.w - pb.w).abs().max((pa.q - pb.q).abs()).max((pa.z - pb.z).abs());
    Some(gap / pa.cone_residual().max(f64::MIN_POSITIVE))
}

/// First sample radius where the flanks differ by more than `tol` relative to their distance from the cone.
pub fn trust_radius(lo: &Trajectory, hi: &Trajectory, tol: f64) -> Option<f64> {
    let m = lo.cfg.m;
    let end = lo.y_end.min(hi.y_end);
    lo.samples
        .iter()
        .map(|s| s.state.y)
        .filter(|&y| y > 0.0 && y <= end)
        .find(|&y| phase_gap(lo, hi, y, m).is_none_or(|g| g > tol))
}

/// Joins the accepted solution up to `y_switch` with the far-field continuation between the flanks.
fn continue_accepted(
    kappa: f64,
    flanks: (f64, f64),
    y_switch: f64,
    cfg: &ProblemConfig,
    opts: &ShootOptions,
) -> Result<(Trajectory, Continuation)> {
    let near = cfg.with_y_max(y_switch);
    let o = IntegrateOptions { stop_on_region: true, outputs: opts.outputs.clone() };
    let mut runs = scan(&[flanks.0, kappa, flanks.1], &near, &o).into_iter();
    let mut next = || -> Result<Trajectory> {
        let t = runs.next().expect("three runs")?;
        if t.event != TerminalEvent::ReachedYMax {
            return Err(Error::NotAccepted { event: t.event, y: t.y_end });
        }
        Ok(t)
    };
    let (tl, mut accepted, th) = (next()?, next()?, next()?);
    let end = |t: &Trajectory| to_deviation(&t.last().expect("nonempty").state, cfg.m);
    let cont = continue_between(cfg, y_switch.ln(), end(&tl)?, end(&th)?, opts.trust_tol)?;
    let xi_end = cfg.y_max.ln();
    for &(xi, v) in &cont.points {
        let mut s = from_deviation(xi, &v, cfg.m);
        if xi >= xi_end {
            s.y = cfg.y_max;
        }
        if !s.is_finite() {
            return Err(Error::NonFinite { y: s.y });
        }
        let mut sample = Sample::new(s, cfg);
        sample.deviation = Some([v[1], v[2], v[3]]);
        accepted.samples.push(sample);
    }
    accepted.cfg = *cfg;
    accepted.y_end = cfg.y_max;
    accepted.continued_from = Some(y_switch);
    Ok((accepted, cont))
}

pub fn shoot_with(cfg: &ProblemConfig, opts: &ShootOptions) -> Result<ShootingResult> {
    cfg.validate()?;
    if !(opts.kappa_tol > 0.0) {
        return Err(Error::Config(format!("kappa_tol = {} must be positive", opts.kappa_tol)));
    }
    let initial = bracket_scan(cfg)?;
    let (mut lo, mut hi) = (initial.lo, initial.hi);
    let mut history = initial.probes.clone();
    let mut flags = Vec::new();
    let mut iterations = 0;
    let mut undecided_star = None;
    let mut decide_cfg = *cfg;
    while hi - lo > opts.kappa_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let (mut p, mut v) = probe(mid, &decide_cfg)?;
        let mut widen = 0;
        while v == Verdict::Undecided && widen < opts.max_widen {
            widen += 1;
            decide_cfg = decide_cfg.with_y_max(2.0 * decide_cfg.y_max);
            (p, v) = probe(mid, &decide_cfg)?;
        }
        history.push(p);
        match v {
            Verdict::Plus => hi = mid,
            Verdict::Minus => lo = mid,
            Verdict::Undecided => {
                flags.push("undecided_at_tolerance".to_string());
                undecided_star = Some(mid);
                break;
            }
        }
    }
    let kappa_star = undecided_star.unwrap_or(0.5 * (lo + hi));

    let flank_opts = probe_options();
    let flanks = scan(&[lo, hi], &decide_cfg, &flank_opts);
    let y_trust = match (&flanks[0], &flanks[1]) {
        (Ok(a), Ok(b)) => trust_radius(a, b, opts.trust_tol),
        _ => None,
    };
    let switch = y_trust.filter(|&y| opts.continue_far_field && y > cfg.y_start && y < cfg.y_max);
    let (trajectory, continuation) = match switch {
        Some(y) => {
            flags.push("far_field_continued".to_string());
            let (t, c) = continue_accepted(kappa_star, (lo, hi), y, cfg, opts)?;
            (t, Some(ContinuationStats { stages: c.stages, flights: c.flights }))
        }
        None => {
            let accept_opts = IntegrateOptions { stop_on_region: true, outputs: opts.outputs.clone() };
            (integrate_with(kappa_star, cfg, &accept_opts)?, None)
        }
    };
    if trajectory.event != TerminalEvent::ReachedYMax {
        return Err(Error::NotAccepted { event: trajectory.event, y: trajectory.y_end });
    }
    let slope = slope_estimate(&trajectory)?;
    let dissipation = dissipation_integral(&trajectory, cfg)?;
    let rate_fit = if cfg.m < 4.0 {
        match rate_fit(&trajectory, slope.a, cfg) {
            Ok(f) => Some(f),
            Err(e) => {
                flags.push(format!("rate_fit_unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(ShootingResult {
        kappa_lo: lo,
        kappa_hi: hi,
        kappa_star,
        a: slope.a,
        slope,
        dissipation,
        rate_fit,
        iterations,
        initial_bracket: (initial.lo, initial.hi),
        history,
        y_trust,
        y_max_decide: decide_cfg.y_max,
        flags,
        continuation,
        trajectory,
    })
}

fn require_accepted(traj: &Trajectory) -> Result<()> {
    if traj.event != TerminalEvent::ReachedYMax {
        return Err(Error::Precondition(format!(
            "trajectory ended with {} at y = {}; an accepted profile must reach y_max",
            traj.event.name(),
            traj.y_end
        )));
    }
    Ok(())
}

/// Mean and spread of `f/y` over the last decade of samples.
pub fn slope_estimate(traj: &Trajectory) -> Result<SlopeEstimate> {
    require_accepted(traj)?;
    let end = traj.samples.last().map(|s| s.state.y).unwrap_or(0.0);
    let ratios: Vec<f64> = traj
        .states()
        .filter(|s| s.y >= end / 10.0 && s.y > 0.0)
        .map(|s| s.f / s.y)
        .collect();
    if ratios.is_empty() {
        return Err(Error::WindowTooShort { usable: 0, needed: 1 });
    }
    let a = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SlopeEstimate { a, spread: max - min, window: (end / 10.0, end), samples: ratios.len() })
}

fn integrate_samples(traj: &Trajectory, eps: f64, g: impl Fn(&crate::model::ProfileState) -> f64) -> (f64, f64) {
    let mut total = 0.0;
    let mut err = 0.0;
    for w in traj.samples.windows(2) {
        let (a, b) = (w[0].state.y, w[1].state.y);
        let q = adaptive_simpson(|y| traj.state_at(y).map(|s| g(&s)).unwrap_or(f64::NAN), a, b, eps * (b - a));
        total += q.value;
        err += q.error;
    }
    (total, err)
}

/// `D = ∫₀^∞ f^m f_yyy² dy`, quadrature on the sampled range plus a tail estimate.
pub fn dissipation_integral(traj: &Trajectory, cfg: &ProblemConfig) -> Result<Dissipation> {
    require_accepted(traj)?;
    let (m, alpha) = (cfg.m, cfg.alpha);
    let dens = |s: &crate::model::ProfileState| s.f.powf(m) * s.fyyy * s.fyyy;
    let (quadrature, quadrature_error) = integrate_samples(traj, 1e-14, dens);
    let rate = |s: &crate::model::ProfileState| 0.5 * alpha * s.fy * s.fy + dens(s);
    let (energy_integral, _) = integrate_samples(traj, 1e-14, rate);
    let last = traj.samples.last().expect("accepted trajectory has samples");
    let tail = dissipation_tail(traj, &dens, m);
    let value = quadrature + tail;
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::NonFinite { y: last.state.y });
    }
    Ok(Dissipation { value, quadrature, tail, quadrature_error, energy_integral, e1_end: last.diag.e1 })
}

/// Envelope extrapolation of the integrand beyond the last sample.
///
/// The integrand oscillates, so the decay is read off the maxima over the two
/// halves (in `ln y`) of the last decade; the result is doubled as a safety factor.
fn dissipation_tail(traj: &Trajectory, dens: &dyn Fn(&crate::model::ProfileState) -> f64, m: f64) -> f64 {
    let end = traj.y_end;
    let mid = end / 10f64.sqrt();
    let peak = |from: f64, to: f64| {
        traj.states()
            .filter(|s| s.y >= from && s.y <= to)
            .map(|s| (dens(s), s.y))
            .fold((0.0, from), |acc, v| if v.0 > acc.0 { v } else { acc })
    };
    let (i1, y1) = peak(end / 10.0, mid);
    let (i2, y2) = peak(mid, end);
    let i_end = dens(&traj.samples.last().expect("non-empty").state);
    let envelope = i2.max(i_end);
    if envelope == 0.0 {
        return 0.0;
    }
    let tail = if m >= 4.0 {
        // algebraic decay
        let p = (i1 / i2).ln() / (y2 / y1).ln();
        if p.is_finite() && p > 1.0 {
            envelope * end / (p - 1.0)
        } else {
            envelope * end
        }
    } else {
        let lambda = (i1 / i2).ln() / (y2 - y1);
        if lambda.is_finite() && lambda > 0.0 {
            envelope / lambda
        } else {
            envelope * end
        }
    };
    2.0 * tail
}

/// Cone residual `r(y) = max(|W − 1|, |Q|, |Z|)` at every positive sample,
/// with the noise floor of its representation.
pub fn cone_residuals(traj: &Trajectory) -> Vec<(f64, f64, f64)> {
    let m = traj.cfg.m;
    traj.samples
        .iter()
        .filter(|s| s.state.y > 0.0)
        .filter_map(|s| {
            let d = s.cone_deviation(m)?;
            let floor = if s.deviation.is_some() { CARRIED_FLOOR } else { 1e3 * f64::EPSILON };
            Some((s.state.y, d[0].abs().max(d[1].abs()).max(d[2].abs()), floor))
        })
        .collect()
}

/// Noise floor of a carried deviation.
pub const CARRIED_FLOOR: f64 = 1e3 * 1e-280;
pub const RATE_FIT_CEILING: f64 = 1e-2;
pub const MIN_FIT_SAMPLES: usize = 10;

pub fn k0_theory(m: f64, a: f64) -> f64 {
    3.0 / 8.0 * (4.0 - m).powf(4.0 / 3.0) * a.powf(m / 3.0)
}

pub fn k0_linearized(m: f64, a: f64) -> f64 {
    1.5 * (4.0 - m).powf(-4.0 / 3.0) * a.powf(-m / 3.0)
}

/// Fits `ln(−ln r)` against `ln y` over the final decade of the trajectory,
/// restricted to `r` between the noise floor and `RATE_FIT_CEILING`.
pub fn rate_fit(traj: &Trajectory, a: f64, cfg: &ProblemConfig) -> Result<AsymptoticFit> {
    if cfg.m >= 4.0 {
        return Err(Error::Precondition("the double-exponential rate applies to m < 4".into()));
    }
    require_accepted(traj)?;
    let res = cone_residuals(traj);
    let end = res.last().map_or(0.0, |r| r.0);
    let start = res.iter().rposition(|&(_, r, _)| r >= RATE_FIT_CEILING).map_or(0, |i| i + 1);
    let window: Vec<(f64, f64)> = res[start..]
        .iter()
        .filter(|&&(y, r, floor)| y >= end / 10.0 && r > floor)
        .map(|&(y, r, _)| (y, r))
        .collect();
    let (x, yv): (Vec<f64>, Vec<f64>) = window.iter().map(|&(y, r)| (y.ln(), (-r.ln()).ln())).unzip();
    if x.len() < MIN_FIT_SAMPLES {
        return Err(Error::WindowTooShort { usable: x.len(), needed: MIN_FIT_SAMPLES });
    }
    let exponent_theory = (4.0 - cfg.m) / 3.0;
    let free: LineFit = line_fit(&x, &yv).ok_or(Error::WindowTooShort { usable: x.len(), needed: 2 })?;
    let pinned = intercept_fit(&x, &yv, exponent_theory).expect("non-empty window");
    Ok(AsymptoticFit {
        k0_theory: k0_theory(cfg.m, a),
        k0_fitted: pinned.intercept.exp(),
        k0_linearized: k0_linearized(cfg.m, a),
        exponent_theory,
        exponent_fitted: free.slope,
        window: (window[0].0, window[window.len() - 1].0),
        samples: x.len(),
        residual: free.residual,
    })
}
