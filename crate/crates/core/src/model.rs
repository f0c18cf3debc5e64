//! Domain types and the two coordinate systems of the profile equation
//!
//! The self-similar profile `f(y)` solves
//!
//! ```text
//! α (f − y f_y) + (f^m f_yyy)_y = 0,   f(0) = 1, f_y(0) = 0, f_yy(0) = κ, f_yyy(0) = 0,
//! ```
//!
//! written here either in physical variables `(y, f, f_y, f_yy, f_yyy)` or in
//! the scaling-adapted phase variables `(ξ, Φ, W, Q, Z)` with `y = e^ξ`,
//! `Φ = f / y^{4/m}`, `W = y f_y / f`, `Q = y^{2/3} f^{(m−3)/3} f_yy` and
//! `Z = y^{1/3} f^{(2m−3)/3} f_yyy`. In phase variables the equation is an
//! autonomous first-order system whose sign cones
//! `Σ± = {Φ > 0, ±(W − 1) > 0, ±Q > 0, ±Z > 0}` are invariant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Similarity exponent: `1/(4 − m)` for `m < 4` and the exponential rate `b` for `m = 4`.
pub fn alpha(m: f64, b: Option<f64>) -> Result<f64> {
    if !(m.is_finite() && m > 0.0 && m <= 4.0) {
        return Err(Error::Config(format!("mobility exponent m = {m} must lie in (0, 4]")));
    }
    match (m == 4.0, b) {
        (true, Some(b)) if b.is_finite() && b > 0.0 => Ok(b),
        (true, Some(b)) => Err(Error::Config(format!("rate b = {b} must be positive"))),
        (true, None) => Err(Error::Config("m = 4 requires a positive rate b".into())),
        (false, Some(_)) => Err(Error::Config("rate b is only meaningful for m = 4".into())),
        (false, None) => Ok(1.0 / (4.0 - m)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub m: f64,
    pub b: Option<f64>,
    /// Derived from `m` and `b`; never set by hand.
    pub alpha: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Radius of the series seed.
    pub y_start: f64,
    /// Truncation radius of the integration.
    pub y_max: f64,
    /// Touch-down floor for `f`.
    pub f_min: f64,
    /// Margin used by the region classifier.
    pub sign_margin: f64,
}

impl ProblemConfig {
    pub const DEFAULT_RTOL: f64 = 1e-11;
    pub const DEFAULT_ATOL: f64 = 1e-13;
    pub const DEFAULT_Y_START: f64 = 1e-3;
    pub const DEFAULT_Y_MAX: f64 = 50.0;
    pub const DEFAULT_F_MIN: f64 = 1e-8;
    pub const DEFAULT_SIGN_MARGIN: f64 = 1e-9;

    pub fn new(m: f64, b: Option<f64>) -> Result<Self> {
        let cfg = ProblemConfig {
            m,
            b,
            alpha: alpha(m, b)?,
            rtol: Self::DEFAULT_RTOL,
            atol: Self::DEFAULT_ATOL,
            y_start: Self::DEFAULT_Y_START,
            y_max: Self::DEFAULT_Y_MAX,
            f_min: Self::DEFAULT_F_MIN,
            sign_margin: Self::DEFAULT_SIGN_MARGIN,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Truncation radius used when none is given: far enough out that the
    /// slope settles and the double-exponential tail is still above rounding.
    pub fn suggested_y_max(m: f64) -> f64 {
        if m < 1.0 {
            200.0
        } else if m < 2.0 {
            1e3
        } else if m < 3.0 {
            1e4
        } else {
            1e6
        }
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_y_max(mut self, y_max: f64) -> Self {
        self.y_max = y_max;
        self
    }

    pub fn with_y_start(mut self, y_start: f64) -> Self {
        self.y_start = y_start;
        self
    }

    pub fn with_f_min(mut self, f_min: f64) -> Self {
        self.f_min = f_min;
        self
    }

    pub fn with_sign_margin(mut self, margin: f64) -> Self {
        self.sign_margin = margin;
        self
    }

    /// Checks every invariant, including that `alpha` matches `(m, b)`.
    pub fn validate(&self) -> Result<()> {
        let expected = alpha(self.m, self.b)?;
        if self.alpha != expected {
            return Err(Error::Config(format!(
                "alpha = {} inconsistent with m = {}, b = {:?}",
                self.alpha, self.m, self.b
            )));
        }
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("y_start", self.y_start),
            ("f_min", self.f_min),
            ("sign_margin", self.sign_margin),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} = {value} must be positive")));
            }
        }
        if !(self.y_max.is_finite() && self.y_max > self.y_start) {
            return Err(Error::Config(format!(
                "y_max = {} must exceed y_start = {}",
                self.y_max, self.y_start
            )));
        }
        Ok(())
    }

    /// Scaling exponent `4/m` of `Φ`.
    pub fn phi_exponent(&self) -> f64 {
        4.0 / self.m
    }
}

/// Physical-variable state of the fourth-order profile equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileState {
    pub y: f64,
    pub f: f64,
    pub fy: f64,
    pub fyy: f64,
    pub fyyy: f64,
}

impl ProfileState {
    pub fn new(y: f64, f: f64, fy: f64, fyy: f64, fyyy: f64) -> Self {
        ProfileState { y, f, fy, fyy, fyyy }
    }

    /// The derivative block `(f, f_y, f_yy, f_yyy)`.
    pub fn vector(&self) -> [f64; 4] {
        [self.f, self.fy, self.fyy, self.fyyy]
    }

    pub fn from_vector(y: f64, v: [f64; 4]) -> Self {
        ProfileState { y, f: v[0], fy: v[1], fyy: v[2], fyyy: v[3] }
    }

    pub fn is_finite(&self) -> bool {
        self.y.is_finite() && self.vector().iter().all(|v| v.is_finite())
    }
}

/// `d/dy` of a [`ProfileState`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileDerivative {
    pub fy: f64,
    pub fyy: f64,
    pub fyyy: f64,
    pub fyyyy: f64,
}

impl ProfileDerivative {
    pub fn vector(&self) -> [f64; 4] {
        [self.fy, self.fyy, self.fyyy, self.fyyyy]
    }
}

/// Scaling-adapted state `(ξ, Φ, W, Q, Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub xi: f64,
    pub phi: f64,
    pub w: f64,
    pub q: f64,
    pub z: f64,
}

impl PhaseState {
    pub fn vector(&self) -> [f64; 4] {
        [self.phi, self.w, self.q, self.z]
    }

    pub fn from_vector(xi: f64, v: [f64; 4]) -> Self {
        PhaseState { xi, phi: v[0], w: v[1], q: v[2], z: v[3] }
    }

    /// Distance `max(|W − 1|, |Q|, |Z|)` from the cone fixed point.
    pub fn cone_residual(&self) -> f64 {
        (self.w - 1.0).abs().max(self.q.abs()).max(self.z.abs())
    }
}

/// `d/dξ` of a [`PhaseState`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDerivative {
    pub dphi: f64,
    pub dw: f64,
    pub dq: f64,
    pub dz: f64,
}

impl PhaseDerivative {
    pub fn vector(&self) -> [f64; 4] {
        [self.dphi, self.dw, self.dq, self.dz]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    SigmaPlus,
    SigmaMinus,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionTag {
    pub region: Region,
    /// Where a decisive verdict was reached.
    pub y: Option<f64>,
}

impl RegionTag {
    pub fn is_decisive(&self) -> bool {
        self.region != Region::Undecided
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub e1: f64,
    /// `−∞` at `y = 0`.
    pub e2: f64,
}

#[inline]
pub(crate) fn top_derivative(m: f64, alpha: f64, y: f64, v: &[f64; 4]) -> f64 {
    let [f, fy, _, fyyy] = *v;
    let fm = f.powf(m);
    (-alpha * (f - y * fy) - m * (fm / f) * fy * fyyy) / fm
}

/// Right-hand side of the profile equation solved for `f_yyyy`.
pub fn rhs_physical(s: &ProfileState, cfg: &ProblemConfig) -> Result<ProfileDerivative> {
    if !(s.f > 0.0) {
        return Err(Error::Precondition(format!("f = {} must be positive", s.f)));
    }
    let fyyyy = top_derivative(cfg.m, cfg.alpha, s.y, &s.vector());
    if !fyyyy.is_finite() {
        return Err(Error::NonFinite { y: s.y });
    }
    Ok(ProfileDerivative { fy: s.fy, fyy: s.fyy, fyyy: s.fyyy, fyyyy })
}

pub fn to_phase(s: &ProfileState, m: f64) -> Result<PhaseState> {
    if !(s.y > 0.0) || !(s.f > 0.0) {
        return Err(Error::Precondition(format!(
            "phase variables need y > 0 and f > 0 (y = {}, f = {})",
            s.y, s.f
        )));
    }
    let (y, f) = (s.y, s.f);
    Ok(PhaseState {
        xi: y.ln(),
        phi: f / y.powf(4.0 / m),
        w: y * s.fy / f,
        q: y.powf(2.0 / 3.0) * f.powf((m - 3.0) / 3.0) * s.fyy,
        z: y.cbrt() * f.powf((2.0 * m - 3.0) / 3.0) * s.fyyy,
    })
}

pub fn from_phase(p: &PhaseState, m: f64) -> Result<ProfileState> {
    if !(p.phi > 0.0) {
        return Err(Error::Precondition(format!("Φ = {} must be positive", p.phi)));
    }
    let y = p.xi.exp();
    let f = p.phi * y.powf(4.0 / m);
    Ok(ProfileState {
        y,
        f,
        fy: p.w * f / y,
        fyy: p.q / (y.powf(2.0 / 3.0) * f.powf((m - 3.0) / 3.0)),
        fyyy: p.z / (y.cbrt() * f.powf((2.0 * m - 3.0) / 3.0)),
    })
}

pub fn phase_rhs(p: &PhaseState, cfg: &ProblemConfig) -> Result<PhaseDerivative> {
    if !(p.phi > 0.0) {
        return Err(Error::Precondition(format!("Φ = {} must be positive", p.phi)));
    }
    Ok(phase_rhs_unchecked(cfg.m, cfg.alpha, &p.vector()))
}

#[inline]
pub(crate) fn phase_rhs_unchecked(m: f64, alpha: f64, v: &[f64; 4]) -> PhaseDerivative {
    let [phi, w, q, z] = *v;
    let scale = phi.powf(m / 3.0);
    PhaseDerivative {
        dphi: phi * (w - 4.0 / m),
        dw: q / scale + w * (1.0 - w),
        dq: (2.0 / 3.0 + (m - 3.0) / 3.0 * w) * q + z / scale,
        dz: alpha * (w - 1.0) / scale + (1.0 / 3.0 - (m + 3.0) / 3.0 * w) * z,
    }
}

/// Region membership from the signs of `y f_y − f`, `f_yy` and `f_yyy`.
///
/// For `y, f > 0` the prefactors relating these to `W − 1`, `Q` and `Z` are
/// positive, so the test needs no fractional powers. See [`margins`].
pub fn classify(s: &ProfileState, cfg: &ProblemConfig) -> RegionTag {
    let region = region_with_margin(s, cfg.sign_margin);
    RegionTag { region, y: (region != Region::Undecided).then_some(s.y) }
}

pub(crate) fn region_with_margin(s: &ProfileState, margin: f64) -> Region {
    let [gap, fyy, fyyy] = sign_quantities(s);
    let [mg, m2, m3] = margins(s, margin);
    if gap > mg && fyy > m2 && fyyy > m3 {
        Region::SigmaPlus
    } else if gap < -mg && fyy < -m2 && fyyy < -m3 {
        Region::SigmaMinus
    } else {
        Region::Undecided
    }
}

/// `(y f_y − f, f_yy, f_yyy)`, whose signs decide region membership.
pub fn sign_quantities(s: &ProfileState) -> [f64; 3] {
    [s.y * s.fy - s.f, s.fyy, s.fyyy]
}

/// Classification thresholds for [`sign_quantities`].
///
/// `ε_c (1 + |f|)` for the slope gap; the curvature thresholds carry the
/// natural scalings `f/y²` and `f/y³` so that the test stays meaningful on the
/// far-field cone where `f_yy, f_yyy → 0` algebraically.
pub fn margins(s: &ProfileState, margin: f64) -> [f64; 3] {
    let base = margin * (1.0 + s.f.abs());
    [base, base / (1.0 + s.y * s.y), base / (1.0 + s.y * s.y * s.y)]
}

/// Strict-inequality membership test (no margin).
pub fn in_region(s: &ProfileState, region: Region) -> bool {
    let slope_gap = s.y * s.fy - s.f;
    match region {
        Region::SigmaPlus => slope_gap > 0.0 && s.fyy > 0.0 && s.fyyy > 0.0,
        Region::SigmaMinus => slope_gap < 0.0 && s.fyy < 0.0 && s.fyyy < 0.0,
        Region::Undecided => true,
    }
}

/// `E1 = α (f f_y − ½ y f_y²) + f^m f_yy f_yyy`, non-decreasing along solutions.
pub fn energy_e1(s: &ProfileState, cfg: &ProblemConfig) -> f64 {
    cfg.alpha * (s.f * s.fy - 0.5 * s.y * s.fy * s.fy) + s.f.powf(cfg.m) * s.fyy * s.fyyy
}

/// `E2 = −α/(2y) (f − y f_y)² + f^m f_yy f_yyy`, diverging to `−∞` at the origin.
pub fn energy_e2(s: &ProfileState, cfg: &ProblemConfig) -> Result<f64> {
    if !(s.y > 0.0) {
        return Err(Error::Precondition("E2 is undefined at y = 0".into()));
    }
    let gap = s.f - s.y * s.fy;
    Ok(-cfg.alpha / (2.0 * s.y) * gap * gap + s.f.powf(cfg.m) * s.fyy * s.fyyy)
}

/// `dE1/dy = α/2 f_y² + f^m f_yyy²`.
pub fn energy_e1_rate(s: &ProfileState, cfg: &ProblemConfig) -> f64 {
    0.5 * cfg.alpha * s.fy * s.fy + s.f.powf(cfg.m) * s.fyyy * s.fyyy
}

/// `dE2/dy = α/(2y²) (f − y f_y)² + f^m f_yyy²`.
pub fn energy_e2_rate(s: &ProfileState, cfg: &ProblemConfig) -> f64 {
    let gap = s.f - s.y * s.fy;
    0.5 * cfg.alpha * gap * gap / (s.y * s.y) + s.f.powf(cfg.m) * s.fyyy * s.fyyy
}

pub fn diagnostics(s: &ProfileState, cfg: &ProblemConfig) -> DiagnosticsRow {
    DiagnosticsRow {
        e1: energy_e1(s, cfg),
        e2: energy_e2(s, cfg).unwrap_or(f64::NEG_INFINITY),
    }
}
