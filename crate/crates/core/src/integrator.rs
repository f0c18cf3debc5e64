//! Series seed, adaptive integration to the first decisive event, dense
//! interpolation of the sampled trajectory and similarity reconstruction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    classify, diagnostics, to_phase, top_derivative,
    DiagnosticsRow, ProblemConfig, ProfileState, Region, RegionTag,
};
use crate::ode::{bisect_first, DenseStep, Dp5, StepFailure, Tolerances};

/// Resolution of event localisation in `y`.
pub const EVENT_RESOLUTION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedExpansion {
    pub kappa: f64,
    pub y_start: f64,
    pub state: ProfileState,
}

/// Taylor seed at `y_start`.
///
/// The ODE forces `f''''(0) = −α` and `f⁽⁶⁾(0) = ακ(1 + 3m)`; odd orders vanish.
/// Keeping the sixth-order term makes the truncation error `O(y_start⁸)`.
pub fn seed(kappa: f64, cfg: &ProblemConfig) -> SeedExpansion {
    let y = cfg.y_start;
    let a = cfg.alpha;
    let f6 = a * kappa * (1.0 + 3.0 * cfg.m);
    let y2 = y * y;
    let state = ProfileState {
        y,
        f: 1.0 + kappa * y2 / 2.0 - a * y2 * y2 / 24.0 + f6 * y2 * y2 * y2 / 720.0,
        fy: kappa * y - a * y2 * y / 6.0 + f6 * y2 * y2 * y / 120.0,
        fyy: kappa - a * y2 / 2.0 + f6 * y2 * y2 / 24.0,
        fyyy: -a * y + f6 * y2 * y / 6.0,
    };
    SeedExpansion { kappa, y_start: y, state }
}

/// Consistency of the truncated series with the ODE at `y_start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedCheck {
    pub y_start: f64,
    pub fyyyy_series: f64,
    pub fyyyy_ode: f64,
    pub residual: f64,
}

pub fn seed_check(kappa: f64, cfg: &ProblemConfig) -> SeedCheck {
    let s = seed(kappa, cfg).state;
    let y = cfg.y_start;
    let series = -cfg.alpha + cfg.alpha * kappa * (1.0 + 3.0 * cfg.m) * y * y / 2.0;
    let ode = top_derivative(cfg.m, cfg.alpha, y, &s.vector());
    SeedCheck { y_start: y, fyyyy_series: series, fyyyy_ode: ode, residual: (series - ode).abs() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalEvent {
    EnteredSigmaPlus,
    EnteredSigmaMinus,
    TouchDown,
    NonFinite,
    ReachedYMax,
}

impl TerminalEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TerminalEvent::EnteredSigmaPlus => "EnteredSigmaPlus",
            TerminalEvent::EnteredSigmaMinus => "EnteredSigmaMinus",
            TerminalEvent::TouchDown => "TouchDown",
            TerminalEvent::NonFinite => "NonFinite",
            TerminalEvent::ReachedYMax => "ReachedYMax",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            TerminalEvent::EnteredSigmaPlus,
            TerminalEvent::EnteredSigmaMinus,
            TerminalEvent::TouchDown,
            TerminalEvent::NonFinite,
            TerminalEvent::ReachedYMax,
        ]
        .into_iter()
        .find(|e| e.name() == s)
    }
}

/// Shooting verdict of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Plus,
    Minus,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: ProfileState,
    pub diag: DiagnosticsRow,
    /// `(W − 1, Q, Z)` carried directly by the stabilised continuation,
    /// resolved far below the cancellation floor of `y f_y / f − 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<[f64; 3]>,
}

impl Sample {
    pub fn new(state: ProfileState, cfg: &ProblemConfig) -> Self {
        Sample { state, diag: diagnostics(&state, cfg), deviation: None }
    }

    /// `(W − 1, Q, Z)`, from the carried values when present.
    pub fn cone_deviation(&self, m: f64) -> Option<[f64; 3]> {
        if self.deviation.is_some() {
            return self.deviation;
        }
        let s = &self.state;
        let p = to_phase(s, m).ok()?;
        Some([(s.y * s.fy - s.f) / s.f, p.q, p.z])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kappa: f64,
    pub cfg: ProblemConfig,
    /// Starts with the exact initial row at `y = 0`.
    pub samples: Vec<Sample>,
    pub event: TerminalEvent,
    pub y_end: f64,
    /// First decisive region entry, also recorded when integration continued past it.
    pub entry: Option<RegionTag>,
    /// Radius where the far-field continuation in deviation variables takes over.
    pub continued_from: Option<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOptions {
    /// Halt at the first decisive region entry.
    pub stop_on_region: bool,
    /// Extra sample points, interpolated from the step's dense output.
    pub outputs: Vec<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { stop_on_region: true, outputs: Vec::new() }
    }
}

pub fn integrate(kappa: f64, cfg: &ProblemConfig) -> Result<Trajectory> {
    integrate_with(kappa, cfg, &IntegrateOptions::default())
}

struct Run<'a> {
    cfg: &'a ProblemConfig,
    opts: &'a IntegrateOptions,
    samples: Vec<Sample>,
    entry: Option<RegionTag>,
    outputs: std::iter::Peekable<std::vec::IntoIter<f64>>,
    accepted: usize,
    rejected: usize,
}

enum Outcome {
    Continue,
    Stop(TerminalEvent, f64),
}

impl Run<'_> {
    fn push(&mut self, s: ProfileState) {
        if self.samples.last().is_none_or(|last| s.y > last.state.y) {
            self.samples.push(Sample::new(s, self.cfg));
        }
    }

    fn next_boundary(&mut self, y: f64, limit: f64) -> f64 {
        while self.outputs.peek().is_some_and(|&o| o <= y) {
            self.outputs.next();
        }
        self.outputs.peek().copied().filter(|&o| o < limit).unwrap_or(limit)
    }

    /// Classifies the end of a step and localises events inside it.
    fn inspect(&mut self, y0: f64, y1: f64, at: &dyn Fn(f64) -> ProfileState) -> Outcome {
        let end = at(y1);
        if !end.is_finite() {
            return Outcome::Stop(TerminalEvent::NonFinite, y0);
        }
        let f_min = self.cfg.f_min;
        if end.f <= f_min {
            let yt = bisect_first(y0, y1, EVENT_RESOLUTION, |y| at(y).f <= f_min);
            if self.entry.is_none() && self.opts.stop_on_region {
                if let Some(o) = self.region_entry(y0, yt, at) {
                    return o;
                }
            }
            self.push(at(yt));
            return Outcome::Stop(TerminalEvent::TouchDown, yt);
        }
        if self.entry.is_none() && classify(&end, self.cfg).is_decisive() {
            if let Some(o) = self.region_entry(y0, y1, at) {
                return o;
            }
        }
        Outcome::Continue
    }

    fn region_entry(&mut self, y0: f64, y1: f64, at: &dyn Fn(f64) -> ProfileState) -> Option<Outcome> {
        let cfg = self.cfg;
        if !classify(&at(y1), cfg).is_decisive() {
            return None;
        }
        let ye = bisect_first(y0, y1, EVENT_RESOLUTION, |y| classify(&at(y), cfg).is_decisive());
        let state = at(ye);
        let tag = classify(&state, cfg);
        self.entry = Some(tag);
        if !self.opts.stop_on_region {
            return None;
        }
        self.push(state);
        let event = match tag.region {
            Region::SigmaPlus => TerminalEvent::EnteredSigmaPlus,
            _ => TerminalEvent::EnteredSigmaMinus,
        };
        Some(Outcome::Stop(event, ye))
    }

    fn failure_event(&self) -> TerminalEvent {
        match self.entry {
            Some(RegionTag { region: Region::SigmaMinus, .. }) => TerminalEvent::TouchDown,
            _ => TerminalEvent::NonFinite,
        }
    }
}

fn tolerances(cfg: &ProblemConfig, span: f64) -> Tolerances {
    Tolerances { rtol: cfg.rtol, atol: cfg.atol, h_max: span, h_min: 1e-14 }
}

pub fn integrate_with(kappa: f64, cfg: &ProblemConfig, opts: &IntegrateOptions) -> Result<Trajectory> {
    cfg.validate()?;
    if !kappa.is_finite() {
        return Err(Error::Config(format!("kappa = {kappa} must be finite")));
    }
    let mut outputs: Vec<f64> = opts.outputs.iter().copied().filter(|y| y.is_finite()).collect();
    outputs.sort_by(f64::total_cmp);
    let mut run = Run {
        cfg,
        opts,
        samples: Vec::new(),
        entry: None,
        outputs: outputs.into_iter().peekable(),
        accepted: 0,
        rejected: 0,
    };
    run.push(ProfileState::new(0.0, 1.0, 0.0, kappa, 0.0));
    let s0 = seed(kappa, cfg).state;
    run.push(s0);

    let finish = |run: Run, event, y_end| Trajectory {
        kappa,
        cfg: *cfg,
        samples: run.samples,
        event,
        y_end,
        entry: run.entry,
        continued_from: None,
        accepted_steps: run.accepted,
        rejected_steps: run.rejected,
    };

    let tag = classify(&s0, cfg);
    if tag.is_decisive() {
        run.entry = Some(tag);
        if opts.stop_on_region {
            let event = if tag.region == Region::SigmaPlus {
                TerminalEvent::EnteredSigmaPlus
            } else {
                TerminalEvent::EnteredSigmaMinus
            };
            return Ok(finish(run, event, s0.y));
        }
    }

    let (m, alpha) = (cfg.m, cfg.alpha);
    let rhs = |y: f64, v: &[f64; 4]| {
        (v[0] > 0.0).then(|| [v[1], v[2], v[3], top_derivative(m, alpha, y, v)])
    };
    let Some(mut dp) = Dp5::new(rhs, s0.y, s0.vector(), tolerances(cfg, cfg.y_max)) else {
        return Ok(finish(run, TerminalEvent::NonFinite, s0.y));
    };
    loop {
        let target = run.next_boundary(dp.t(), cfg.y_max);
        let step: DenseStep<4> = match dp.step(target) {
            Ok(s) => s,
            Err(StepFailure::Underflow { t }) => {
                run.accepted += dp.accepted;
                run.rejected += dp.rejected;
                let ev = run.failure_event();
                return Ok(finish(run, ev, t));
            }
        };
        let at = |y: f64| ProfileState::from_vector(y, step.eval(y));
        let at_end = |y: f64| {
            if y == step.t1() {
                ProfileState::from_vector(y, step.y1)
            } else {
                at(y)
            }
        };
        if let Outcome::Stop(ev, y) = run.inspect(step.t0, step.t1(), &at_end) {
            run.accepted += dp.accepted;
            run.rejected += dp.rejected;
            return Ok(finish(run, ev, y));
        }
        run.push(ProfileState::from_vector(step.t1(), step.y1));
        if step.t1() >= cfg.y_max {
            break;
        }
    }
    run.accepted += dp.accepted;
    run.rejected += dp.rejected;
    Ok(finish(run, TerminalEvent::ReachedYMax, cfg.y_max))
}

/// `f''''` and `f⁽⁵⁾` from the ODE and its derivative.
pub fn higher_derivatives(s: &ProfileState, m: f64, alpha: f64) -> (f64, f64) {
    let v = s.vector();
    let f4 = top_derivative(m, alpha, s.y, &v);
    let [f, fy, fyy, fyyy] = v;
    let fm = f.powf(m);
    let fm1 = fm / f;
    let fm2 = fm1 / f;
    let f5 = (alpha * s.y * fyy
        - m * (m - 1.0) * fm2 * fy * fy * fyyy
        - m * fm1 * fyy * fyyy
        - 2.0 * m * fm1 * fy * f4)
        / fm;
    (f4, f5)
}

fn quintic_hermite(t: f64, h: f64, p0: [f64; 3], p1: [f64; 3]) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 0.5 * t3 - t4 + 0.5 * t5;
    p0[0] * h0 + h * p0[1] * h1 + h * h * p0[2] * h2 + p1[0] * h3 + h * p1[1] * h4 + h * h * p1[2] * h5
}

impl Trajectory {
    pub fn first(&self) -> Option<&Sample> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn states(&self) -> impl Iterator<Item = &ProfileState> {
        self.samples.iter().map(|s| &s.state)
    }

    pub fn verdict(&self) -> Verdict {
        match self.event {
            TerminalEvent::EnteredSigmaPlus => Verdict::Plus,
            // finite-y breakdown can only happen inside Σ−
            TerminalEvent::EnteredSigmaMinus | TerminalEvent::TouchDown | TerminalEvent::NonFinite => {
                match self.entry {
                    Some(RegionTag { region: Region::SigmaPlus, .. }) => Verdict::Plus,
                    _ => Verdict::Minus,
                }
            }
            TerminalEvent::ReachedYMax => match self.entry.map(|t| t.region) {
                Some(Region::SigmaPlus) => Verdict::Plus,
                Some(Region::SigmaMinus) => Verdict::Minus,
                _ => Verdict::Undecided,
            },
        }
    }

    /// Interpolated state; quintic Hermite per component from the samples,
    /// with the missing derivatives supplied by the ODE.
    pub fn state_at(&self, y: f64) -> Option<ProfileState> {
        let first = self.samples.first()?.state.y;
        let last = self.samples.last()?.state.y;
        if !(y >= first && y <= last) {
            return None;
        }
        let i = self.samples.partition_point(|s| s.state.y <= y).saturating_sub(1);
        let a = self.samples[i].state;
        if a.y == y || i + 1 >= self.samples.len() {
            return Some(ProfileState { y, ..a });
        }
        let b = self.samples[i + 1].state;
        let (m, alpha) = (self.cfg.m, self.cfg.alpha);
        let (a4, a5) = higher_derivatives(&a, m, alpha);
        let (b4, b5) = higher_derivatives(&b, m, alpha);
        let da = [a.f, a.fy, a.fyy, a.fyyy, a4, a5];
        let db = [b.f, b.fy, b.fyy, b.fyyy, b4, b5];
        let h = b.y - a.y;
        let t = (y - a.y) / h;
        let comp = |k: usize| {
            quintic_hermite(t, h, [da[k], da[k + 1], da[k + 2]], [db[k], db[k + 1], db[k + 2]])
        };
        Some(ProfileState { y, f: comp(0), fy: comp(1), fyy: comp(2), fyyy: comp(3) })
    }

    /// Profile height with the linear extension `f(y) = (f_end / y_end) y` beyond the last sample.
    pub fn height_at(&self, y: f64) -> Option<f64> {
        let last = self.samples.last()?.state;
        if y > last.y {
            return (last.y > 0.0).then(|| last.f / last.y * y);
        }
        self.state_at(y).map(|s| s.f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    /// `h[i][j]` at `times[i]`, `x[j]`.
    pub h: Vec<Vec<f64>>,
}

/// Rebuilds `h(x, t)` from the similarity profile.
pub fn evolution_snapshots(
    traj: &Trajectory,
    cfg: &ProblemConfig,
    times: &[f64],
    x_grid: &[f64],
) -> Result<Snapshots> {
    if traj.samples.is_empty() {
        return Err(Error::Precondition("empty trajectory".into()));
    }
    let quartic = cfg.m == 4.0;
    if let Some(t) = times.iter().find(|t| !t.is_finite() || (!quartic && **t <= 0.0)) {
        return Err(Error::Precondition(format!("time {t} must be positive for m < 4")));
    }
    let h = times
        .iter()
        .map(|&t| {
            let (amp, stretch) = if quartic {
                let e = (t * cfg.alpha).exp();
                (e, 1.0 / e)
            } else {
                let s = t.powf(cfg.alpha);
                (s, 1.0 / s)
            };
            x_grid
                .iter()
                .map(|&x| {
                    traj.height_at(x.abs() * stretch)
                        .map(|f| amp * f)
                        .ok_or_else(|| Error::Precondition(format!("profile undefined at x = {x}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Snapshots { times: times.to_vec(), x: x_grid.to_vec(), h })
}
