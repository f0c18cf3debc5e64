//! Browser bindings: one profile at a chosen κ, the accepted profile with its
//! evolution snapshots, and the m = 4 far-field roots. Results cross the
//! boundary as JSON strings.

use lifting::integrator::evolution_snapshots;
use lifting::shooting::{shoot, DEFAULT_KAPPA_TOL};
use lifting::spectral::{characteristic_roots, Root};
use lifting::{integrate, ProblemConfig, Trajectory};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest number of points sent to the page per curve.
pub const MAX_POINTS: usize = 600;

#[derive(Debug, Serialize)]
pub struct Curve {
    pub y: Vec<f64>,
    pub f: Vec<f64>,
    /// `y f_y / f`, which leaves (0, 2) once a region is entered.
    pub w: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ProfileView {
    pub m: f64,
    pub kappa: f64,
    pub event: &'static str,
    pub y_end: f64,
    pub curve: Curve,
}

#[derive(Debug, Serialize)]
pub struct EvolutionView {
    pub m: f64,
    pub kappa_star: f64,
    pub a: f64,
    pub dissipation: f64,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub h: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct SpectrumView {
    pub a: f64,
    pub b: f64,
    pub roots: [Root; 3],
    pub z0: Root,
    pub lambda0: f64,
    pub omega0: f64,
}

fn config(m: f64, b: f64) -> lifting::Result<ProblemConfig> {
    ProblemConfig::new(m, (m == 4.0).then_some(b))
}

/// Evenly thinned samples, skipping the origin where `W` is undefined.
fn curve(t: &Trajectory) -> Curve {
    let pts: Vec<_> = t.states().filter(|s| s.y > 0.0).collect();
    let stride = pts.len().div_ceil(MAX_POINTS).max(1);
    let mut c = Curve { y: Vec::new(), f: Vec::new(), w: Vec::new() };
    for (i, s) in pts.iter().enumerate() {
        if i % stride == 0 || i + 1 == pts.len() {
            c.y.push(s.y);
            c.f.push(s.f);
            c.w.push(s.y * s.fy / s.f);
        }
    }
    c
}

pub fn profile_view(m: f64, b: f64, kappa: f64, y_max: f64) -> lifting::Result<ProfileView> {
    let cfg = config(m, b)?.with_y_max(y_max);
    let t = integrate(kappa, &cfg)?;
    Ok(ProfileView { m, kappa, event: t.event.name(), y_end: t.y_end, curve: curve(&t) })
}

/// Shoots the accepted profile and rebuilds `count` snapshots on `t ∈ [t0, t1]`, `x ∈ [−x_max, x_max]`.
pub fn evolution_view(m: f64, b: f64, t0: f64, t1: f64, count: usize, x_max: f64) -> lifting::Result<EvolutionView> {
    let cfg = config(m, b)?;
    let cfg = cfg.with_y_max(ProblemConfig::suggested_y_max(m));
    let r = shoot(&cfg, DEFAULT_KAPPA_TOL)?;
    let count = count.max(2);
    let times: Vec<f64> = (0..count).map(|i| t0 + (t1 - t0) * i as f64 / (count - 1) as f64).collect();
    let x: Vec<f64> = (0..=200).map(|i| -x_max + 2.0 * x_max * i as f64 / 200.0).collect();
    let s = evolution_snapshots(&r.trajectory, &cfg, &times, &x)?;
    Ok(EvolutionView { m, kappa_star: r.kappa_star, a: r.a, dissipation: r.dissipation.value, times: s.times, x: s.x, h: s.h })
}

pub fn spectrum_view(a: f64, b: f64) -> lifting::Result<SpectrumView> {
    let s = characteristic_roots(a, b)?;
    Ok(SpectrumView { a, b, roots: s.roots, z0: s.z0, lambda0: s.lambda0, omega0: s.omega0 })
}

fn to_js<T: Serialize>(r: lifting::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn profile(m: f64, b: f64, kappa: f64, y_max: f64) -> Result<String, JsError> {
    to_js(profile_view(m, b, kappa, y_max))
}

#[wasm_bindgen]
pub fn evolution(m: f64, b: f64, t0: f64, t1: f64, count: usize, x_max: f64) -> Result<String, JsError> {
    to_js(evolution_view(m, b, t0, t1, count, x_max))
}

#[wasm_bindgen]
pub fn spectrum(a: f64, b: f64) -> Result<String, JsError> {
    to_js(spectrum_view(a, b))
}
