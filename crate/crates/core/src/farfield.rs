//! Continuation of the accepted profile past the radius where the two
//! flanking solutions of the bisection separate.
//!
//! Both flanks are carried in `v = (Φ, W − 1, Q, Z)` over `ξ = ln y`, where the
//! deviation from the cone keeps full relative precision. At each stage the
//! segment between the flank states is bisected for the point whose solution
//! enters neither region; the stage ends where the new flanks separate by
//! `trust` relative to the size of the deviation.

use crate::error::{Error, Result};
use crate::model::{from_phase, to_phase, PhaseState, ProblemConfig, ProfileState, Region};
use crate::ode::{Dp5, Tolerances};

/// `(Φ, W − 1, Q, Z)`.
pub type Deviation = [f64; 4];

/// Absolute tolerance in deviation variables; the deviation decays
/// superexponentially, so only relative control is meaningful.
pub const DEVIATION_ATOL: f64 = 1e-280;

/// Phase system written for `(Φ, w = W − 1, Q, Z)`.
pub fn deviation_rhs(m: f64, alpha: f64, v: &Deviation) -> Deviation {
    let [phi, w, q, z] = *v;
    let s = phi.powf(-m / 3.0);
    [
        phi * (1.0 + w - 4.0 / m),
        q * s - w * (1.0 + w),
        ((m - 1.0) / 3.0 + (m - 3.0) / 3.0 * w) * q + z * s,
        alpha * w * s - ((m + 2.0) / 3.0 + (m + 3.0) / 3.0 * w) * z,
    ]
}

/// Strict sign test on `(W − 1, Q, Z)`.
pub fn deviation_region(v: &Deviation) -> Region {
    let [_, w, q, z] = *v;
    if w > 0.0 && q > 0.0 && z > 0.0 {
        Region::SigmaPlus
    } else if w < 0.0 && q < 0.0 && z < 0.0 {
        Region::SigmaMinus
    } else {
        Region::Undecided
    }
}

pub fn to_deviation(s: &ProfileState, m: f64) -> Result<Deviation> {
    let p = to_phase(s, m)?;
    Ok([p.phi, (s.y * s.fy - s.f) / s.f, p.q, p.z])
}

pub fn from_deviation(xi: f64, v: &Deviation, m: f64) -> ProfileState {
    let p = PhaseState { xi, phi: v[0], w: 1.0 + v[1], q: v[2], z: v[3] };
    match from_phase(&p, m) {
        Ok(mut s) => {
            s.fy = s.f * (1.0 + v[1]) / s.y;
            s
        }
        Err(_) => ProfileState::new(xi.exp(), f64::NAN, f64::NAN, f64::NAN, f64::NAN),
    }
}

fn tolerances(cfg: &ProblemConfig, span: f64) -> Tolerances {
    Tolerances { rtol: cfg.rtol, atol: DEVIATION_ATOL, h_max: span, h_min: 0.0 }
}

fn rhs<const N: usize>(m: f64, alpha: f64) -> impl FnMut(f64, &[f64; N]) -> Option<[f64; N]> {
    move |_, v| {
        let mut out = [0.0; N];
        for k in 0..N / 4 {
            let block = [v[4 * k], v[4 * k + 1], v[4 * k + 2], v[4 * k + 3]];
            if !(block[0] > 0.0) {
                return None;
            }
            out[4 * k..4 * k + 4].copy_from_slice(&deviation_rhs(m, alpha, &block));
        }
        out.iter().all(|x| x.is_finite()).then_some(out)
    }
}

/// Step sequence shared by every run of one stage.
///
/// Steps follow the stiffness of the cone, `h = c / (1 + s(ξ))` with
/// `s = Φ^{-m/3}` extrapolated along the cone from the stage start. Runs on the
/// same grid do the same arithmetic per component, so a state's verdict is
/// reproduced exactly when it is carried alongside others.
#[derive(Debug, Clone, Copy)]
struct Grid {
    xi0: f64,
    xi_end: f64,
    s0: f64,
    growth: f64,
    c: f64,
}

const PILOT_STEPS: usize = 32;
const FALLBACK_STEP: f64 = 0.05;
const MAX_STAGES: usize = 100_000;
const MAX_WIDENINGS: i32 = 64;
/// How far past the end of the range a flight may run to reach a verdict.
const FLIGHT_OVERSHOOT: f64 = 64.0;
const MAX_FLIGHT_STEPS: usize = 1_000_000;

impl Grid {
    fn new(cfg: &ProblemConfig, xi0: f64, v: Deviation, xi_end: f64) -> Self {
        let m = cfg.m;
        let stiffness = |phi: f64| 1.0 + phi.powf(-m / 3.0);
        let mut steps: Vec<f64> = Vec::new();
        if let Some(mut dp) = Dp5::new(rhs::<4>(m, cfg.alpha), xi0, v, tolerances(cfg, xi_end - xi0)) {
            while steps.len() < PILOT_STEPS && dp.t() < xi_end {
                let phi = dp.y()[0];
                match dp.step(xi_end) {
                    Ok(step) => {
                        steps.push(step.h * stiffness(phi));
                        if deviation_region(&step.y1) != Region::Undecided {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        }
        steps.sort_by(f64::total_cmp);
        let c = steps.get(steps.len() / 2).copied().unwrap_or(FALLBACK_STEP);
        Grid { xi0, xi_end, s0: v[0].powf(-m / 3.0), growth: (4.0 - m) / 3.0, c }
    }

    /// Next grid point after `xi`, landing exactly on `stop`.
    fn next(&self, xi: f64, stop: f64) -> f64 {
        let s = self.s0 * (self.growth * (xi - self.xi0)).exp();
        let h = self.c / (1.0 + s);
        let rest = stop - xi;
        if h >= rest || rest - h < 1e-12 * rest.max(xi.abs()) { stop } else { xi + h }
    }
}

/// Region reached from `v0` on `grid`, possibly beyond the end of the range.
/// `Undecided` comes with the path up to the end of the range.
fn fly(cfg: &ProblemConfig, grid: &Grid, v0: Deviation) -> (Region, Vec<(f64, Deviation)>) {
    let mut path = vec![(grid.xi0, v0)];
    let Some(mut dp) = Dp5::new(rhs::<4>(cfg.m, cfg.alpha), grid.xi0, v0, tolerances(cfg, 1.0)) else {
        return (Region::SigmaMinus, path);
    };
    let stop = grid.xi_end + FLIGHT_OVERSHOOT;
    while dp.t() < stop && path.len() < MAX_FLIGHT_STEPS {
        let target = if dp.t() < grid.xi_end { grid.next(dp.t(), grid.xi_end) } else { grid.next(dp.t(), stop) };
        match dp.step_fixed(target) {
            Some(step) => {
                path.push((step.t1(), step.y1));
                let r = deviation_region(&step.y1);
                if r != Region::Undecided {
                    return (r, path);
                }
            }
            // Φ → 0 or overflow only happen far inside a region; take the sign pattern last seen
            None => {
                let last = path.last().expect("nonempty").1;
                let r = if last[1] > 0.0 { Region::SigmaPlus } else { Region::SigmaMinus };
                return (r, path);
            }
        }
    }
    path.retain(|(xi, _)| *xi <= grid.xi_end);
    (Region::Undecided, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    /// `(ξ, v)` after the starting point.
    pub points: Vec<(f64, Deviation)>,
    pub stages: usize,
    pub flights: usize,
}

fn separation(lo: &[f64], hi: &[f64], mid: &[f64]) -> f64 {
    let scale = mid[1].abs().max(mid[2].abs()).max(mid[3].abs()).max(f64::MIN_POSITIVE);
    let dev = (1..4).map(|k| (lo[k] - hi[k]).abs()).fold(0.0, f64::max) / scale;
    dev.max((lo[0] - hi[0]).abs() / mid[0])
}

fn straddle_error(xi: f64) -> Error {
    Error::Precondition(format!("far-field flanks at y = {} do not straddle the lifting profile", xi.exp()))
}

/// Continues from `ξ₀` between two states whose solutions enter opposite regions.
pub fn continue_between(
    cfg: &ProblemConfig,
    xi0: f64,
    lo: Deviation,
    hi: Deviation,
    trust: f64,
) -> Result<Continuation> {
    let xi_end = cfg.y_max.ln();
    let mut out = Continuation { points: Vec::new(), stages: 0, flights: 0 };
    let (mut lo, mut hi, mut xi) = (lo, hi, xi0);
    let mut first = true;
    while xi < xi_end {
        out.stages += 1;
        if out.stages > MAX_STAGES {
            return Err(Error::NonFinite { y: xi.exp() });
        }
        let mid0: Deviation = std::array::from_fn(|i| 0.5 * (lo[i] + hi[i]));
        let grid = Grid::new(cfg, xi, mid0, xi_end);
        let verdict = |v: Deviation, out: &mut Continuation| -> std::result::Result<Region, Vec<(f64, Deviation)>> {
            out.flights += 1;
            match fly(cfg, &grid, v) {
                (Region::Undecided, path) => Err(path),
                (r, _) => Ok(r),
            }
        };
        let finish = |path: Vec<(f64, Deviation)>, mut out: Continuation| {
            out.points.extend_from_slice(&path[1..]);
            Ok(out)
        };
        let (rl, rh) = match (verdict(lo, &mut out), verdict(hi, &mut out)) {
            (Err(path), _) | (_, Err(path)) => return finish(path, out),
            (Ok(a), Ok(b)) => (a, b),
        };
        match (rl, rh) {
            (Region::SigmaMinus, Region::SigmaPlus) => {}
            (Region::SigmaPlus, Region::SigmaMinus) => std::mem::swap(&mut lo, &mut hi),
            // the previous grid placed both on one side; push the outer flank out along the gap
            (r, _) if !first => {
                let (anchor, far) = if r == Region::SigmaMinus { (lo, hi) } else { (hi, lo) };
                let mut found = None;
                for j in 1..=MAX_WIDENINGS {
                    let k = 2f64.powi(j);
                    let v: Deviation = std::array::from_fn(|i| anchor[i] + k * (far[i] - anchor[i]));
                    match verdict(v, &mut out) {
                        Err(path) => return finish(path, out),
                        Ok(rv) if rv != r => {
                            found = Some(v);
                            break;
                        }
                        Ok(_) => {}
                    }
                }
                let v = found.ok_or_else(|| straddle_error(xi))?;
                (lo, hi) = if r == Region::SigmaMinus { (anchor, v) } else { (v, anchor) };
            }
            _ => return Err(straddle_error(xi)),
        }
        first = false;

        let blend = |t: f64| -> Deviation { std::array::from_fn(|i| lo[i] + t * (hi[i] - lo[i])) };
        let (mut tl, mut th) = (0.0, 1.0);
        loop {
            let t = 0.5 * (tl + th);
            let v = blend(t);
            if v == blend(tl) || v == blend(th) {
                break;
            }
            match verdict(v, &mut out) {
                Ok(Region::SigmaMinus) => tl = t,
                Ok(_) => th = t,
                Err(path) => return finish(path, out),
            }
        }
        // carry both flanks and the midpoint on the stage grid
        let (vl, vm, vh) = (blend(tl), blend(0.5 * (tl + th)), blend(th));
        let mut init = [0.0; 12];
        init[..4].copy_from_slice(&vl);
        init[4..8].copy_from_slice(&vm);
        init[8..].copy_from_slice(&vh);
        let mut dp = Dp5::new(rhs::<12>(cfg.m, cfg.alpha), xi, init, tolerances(cfg, 1.0))
            .ok_or(Error::NonFinite { y: xi.exp() })?;
        loop {
            let step = dp.step_fixed(grid.next(dp.t(), xi_end)).ok_or(Error::NonFinite { y: dp.t().exp() })?;
            let v = step.y1;
            let mid: Deviation = [v[4], v[5], v[6], v[7]];
            xi = step.t1();
            out.points.push((xi, mid));
            if xi >= xi_end {
                break;
            }
            if separation(&v[..4], &v[8..], &mid) > trust {
                lo = [v[0], v[1], v[2], v[3]];
                hi = [v[8], v[9], v[10], v[11]];
                break;
            }
        }
    }
    Ok(out)
}
