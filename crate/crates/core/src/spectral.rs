//! Spectrum of the far-field linearisation for `m = 4`.
//!
//! About the cone `f = a y` the deviation `(W − 1, Q, Z)` evolves with the
//! constant matrix whose characteristic polynomial is
//! `P_a(z) = (1 − z²)(2 + z) + b/a⁴`. The root `z₀` with the largest negative
//! real part fixes the algebraic approach `f = a y + Re[K y^{1+z₀}] + …`.

use nalgebra::{Complex, DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{line_fit, lstsq};
use crate::integrator::Trajectory;

/// Imaginary parts at or below this are treated as real roots.
pub const CONJUGATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub re: f64,
    pub im: f64,
}

impl Root {
    fn c(&self) -> Complex<f64> {
        Complex::new(self.re, self.im)
    }
}

impl From<Complex<f64>> for Root {
    fn from(z: Complex<f64>) -> Self {
        Root { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub a: f64,
    pub b: f64,
    /// Sorted by real part, then imaginary part.
    pub roots: [Root; 3],
    pub z0: Root,
    pub lambda0: f64,
    pub omega0: f64,
}

/// `P_a(z) = (1 − z²)(2 + z) + c` with `c = b/a⁴`.
pub fn characteristic(z: Complex<f64>, c: f64) -> Complex<f64> {
    let one = Complex::new(1.0, 0.0);
    (one - z * z) * (z + 2.0) + c
}

fn monic(z: Complex<f64>, c: f64) -> Complex<f64> {
    ((z + 2.0) * z - 1.0) * z - (2.0 + c)
}

fn monic_derivative(z: Complex<f64>) -> Complex<f64> {
    (z * 3.0 + 4.0) * z - 1.0
}

fn polish(mut z: Complex<f64>, c: f64) -> Complex<f64> {
    for _ in 0..8 {
        let d = monic_derivative(z);
        if d.norm() == 0.0 {
            break;
        }
        let step = monic(z, c) / d;
        let next = z - step;
        if !(next.re.is_finite() && next.im.is_finite()) || monic(next, c).norm() > monic(z, c).norm() {
            break;
        }
        z = next;
        if step.norm() <= f64::EPSILON * z.norm() {
            break;
        }
    }
    z
}

/// Root with the largest negative real part, taking `Im ≥ 0`.
pub fn select_z0(roots: &[Root]) -> Option<Root> {
    roots
        .iter()
        .filter(|r| r.re < 0.0)
        .map(|r| Root { re: r.re, im: r.im.abs() })
        .fold(None, |best: Option<Root>, r| match best {
            Some(b) if b.re > r.re || (b.re == r.re && b.im <= r.im) => Some(b),
            _ => Some(r),
        })
}

pub fn characteristic_roots(a: f64, b: f64) -> Result<SpectralResult> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Precondition(format!("slope a = {a} must be positive")));
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Precondition(format!("rate b = {b} must be positive")));
    }
    let c = b / a.powi(4);
    // companion matrix of z³ + 2z² − z − (2 + c)
    let companion = Matrix3::new(
        -2.0, 1.0, 2.0 + c, //
        1.0, 0.0, 0.0, //
        0.0, 1.0, 0.0,
    );
    let eig = companion.complex_eigenvalues();
    let mut roots: Vec<Root> = eig.iter().map(|&z| Root::from(polish(z, c))).collect();
    // a real cubic has either three real roots or one real root and a conjugate pair
    for r in roots.iter_mut() {
        if r.im.abs() <= CONJUGATE_TOL {
            r.im = 0.0;
        }
    }
    let complex: Vec<usize> = (0..3).filter(|&i| roots[i].im != 0.0).collect();
    if complex.len() == 2 {
        let (i, j) = (complex[0], complex[1]);
        let re = 0.5 * (roots[i].re + roots[j].re);
        let im = 0.5 * (roots[i].im.abs() + roots[j].im.abs());
        roots[i] = Root { re, im };
        roots[j] = Root { re, im: -im };
    }
    roots.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let z0 = select_z0(&roots)
        .ok_or_else(|| Error::Precondition("no root with negative real part".into()))?;
    Ok(SpectralResult {
        a,
        b,
        roots: [roots[0], roots[1], roots[2]],
        z0,
        lambda0: z0.re,
        omega0: z0.im,
    })
}

impl SpectralResult {
    pub fn residuals(&self) -> [f64; 3] {
        let c = self.b / self.a.powi(4);
        self.roots.map(|r| characteristic(r.c(), c).norm())
    }

    pub fn root_sum(&self) -> Complex<f64> {
        self.roots.iter().map(Root::c).sum()
    }

    pub fn root_product(&self) -> Complex<f64> {
        self.roots.iter().map(Root::c).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub window: (f64, f64),
    pub samples: usize,
    /// `W − 1 ≈ e^{λ₀ξ}(c₁ cos ω₀ξ + c₂ sin ω₀ξ)`.
    pub amplitudes: (f64, f64),
    /// `C₁` with `W − 1 ≈ C₁e^{z₀ξ} + c.c.`
    pub c1: Root,
    /// `K` in `f = a y + Re[K y^{1+z₀}]`.
    pub k: Root,
    /// Relative residual of the `W − 1` fit.
    pub residual: f64,
    pub pass: bool,
    /// Free exponent fitted to `‖(W − 1, Q, Z)‖`.
    pub decay_exponent: f64,
    pub decay_frequency: f64,
    /// `|measured − λ₀| / |λ₀|`.
    pub decay_error: f64,
    /// Plain slope of `ln ‖(W − 1, Q, Z)‖` against `ξ`, oscillation ignored.
    pub log_slope: f64,
}

pub const TAIL_RESIDUAL_LIMIT: f64 = 0.05;

/// Fits the predicted tail to the second half (in `ξ > 0`) of the trajectory.
pub fn tail_expansion_check(traj: &Trajectory, spectrum: &SpectralResult) -> Result<TailReport> {
    if traj.cfg.m != 4.0 {
        return Err(Error::Precondition("tail expansion check applies to m = 4".into()));
    }
    let end = traj.samples.last().map_or(0.0, |s| s.state.y);
    if !(end > 1.0) {
        return Err(Error::WindowTooShort { usable: 0, needed: 10 });
    }
    let xi_lo = 0.5 * end.ln();
    let mut pts = Vec::new();
    let mut loudest: f64 = 0.0;
    for s in traj.samples.iter().filter(|s| s.state.y > 0.0 && s.state.y.ln() >= xi_lo) {
        let Some(d) = s.cone_deviation(4.0) else { continue };
        let floor = if s.deviation.is_some() { crate::shooting::CARRIED_FLOOR } else { 1e3 * f64::EPSILON };
        loudest = loudest.max(d[0].abs());
        if d[0].abs() > floor {
            pts.push((s.state.y.ln(), d));
        }
    }
    if pts.is_empty() {
        return Err(Error::SignalBelowNoise { max: loudest });
    }
    if pts.len() < 10 {
        return Err(Error::WindowTooShort { usable: pts.len(), needed: 10 });
    }
    let (lambda, omega) = (spectrum.lambda0, spectrum.omega0);
    let n = pts.len();
    let ncol = if omega == 0.0 { 1 } else { 2 };
    let design = DMatrix::from_fn(n, ncol, |i, j| {
        let xi = pts[i].0;
        let e = (lambda * xi).exp();
        if j == 0 { e * (omega * xi).cos() } else { e * (omega * xi).sin() }
    });
    // weight every row by the local signal envelope so the late window counts
    let weights: Vec<f64> = pts.iter().map(|p| (-lambda * p.0).exp()).collect();
    let wdesign = DMatrix::from_fn(n, ncol, |i, j| design[(i, j)] * weights[i]);
    let rhs = DVector::from_fn(n, |i, _| pts[i].1[0] * weights[i]);
    let sol = lstsq(&wdesign, &rhs).ok_or(Error::BasisDegenerate { condition: f64::INFINITY })?;
    let c1a = sol.coef[0];
    let c2a = if ncol == 2 { sol.coef[1] } else { 0.0 };
    let residual = sol.residual / rhs.norm();
    let z0 = spectrum.z0.c();
    let (c1, k) = if ncol == 1 {
        let c1 = Complex::new(c1a, 0.0);
        (c1, c1 * spectrum.a / z0)
    } else {
        let c1 = Complex::new(0.5 * c1a, -0.5 * c2a);
        (c1, c1 * 2.0 * spectrum.a / z0)
    };

    let norms: Vec<(f64, f64)> = pts
        .iter()
        .map(|(xi, d)| (*xi, d[0] * d[0] + d[1] * d[1] + d[2] * d[2]))
        .collect();
    let (decay_exponent, decay_frequency) = decay_fit(&norms);
    let (xs, ls): (Vec<f64>, Vec<f64>) = norms.iter().map(|(x, n2)| (*x, 0.5 * n2.ln())).unzip();
    let log_slope = line_fit(&xs, &ls).map_or(f64::NAN, |f| f.slope);
    Ok(TailReport {
        window: (pts[0].0.exp(), pts[n - 1].0.exp()),
        samples: n,
        amplitudes: (c1a, c2a),
        c1: c1.into(),
        k: k.into(),
        residual,
        pass: residual <= TAIL_RESIDUAL_LIMIT,
        decay_exponent,
        decay_frequency,
        decay_error: (decay_exponent - spectrum.lambda0).abs() / spectrum.lambda0.abs(),
        log_slope,
    })
}

/// Relative misfit of `‖Y‖² ≈ e^{2λξ}(c₀ + c₁ cos 2ωξ + c₂ sin 2ωξ)` for fixed `(λ, ω)`.
fn envelope_misfit(norms: &[(f64, f64)], lambda: f64, omega: f64) -> f64 {
    let n = norms.len();
    let design = DMatrix::from_fn(n, 3, |i, j| {
        let (xi, n2) = norms[i];
        let e = (2.0 * lambda * xi).exp() / n2;
        match j {
            0 => e,
            1 => e * (2.0 * omega * xi).cos(),
            _ => e * (2.0 * omega * xi).sin(),
        }
    });
    let rhs = DVector::from_element(n, 1.0);
    lstsq(&design, &rhs).map_or(f64::INFINITY, |s| s.residual)
}

fn golden(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 { (x1, f1) } else { (x2, f2) }
}

/// Variable-projection fit of the decay exponent and frequency of `‖Y‖²`.
fn decay_fit(norms: &[(f64, f64)]) -> (f64, f64) {
    let best_lambda = |omega: f64| golden(-8.0, 0.0, |l| envelope_misfit(norms, l, omega));
    let mut best = (0.0, f64::INFINITY, 0.0);
    for k in 0..=60 {
        let omega = 0.05 * k as f64;
        let (l, r) = best_lambda(omega);
        if r < best.1 {
            best = (omega, r, l);
        }
    }
    let (omega, _) = golden((best.0 - 0.05).max(0.0), best.0 + 0.05, |w| best_lambda(w).1);
    (best_lambda(omega).0, omega)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_perturbation_roots() {
        let s = characteristic_roots(1.0, 1e-12).unwrap();
        let re: Vec<f64> = s.roots.iter().map(|r| r.re).collect();
        assert!((re[0] + 2.0).abs() < 1e-9 && (re[1] + 1.0).abs() < 1e-9 && (re[2] - 1.0).abs() < 1e-9);
        assert!((s.lambda0 + 1.0).abs() < 1e-9);
    }

    #[test]
    fn unit_case() {
        let s = characteristic_roots(1.0, 1.0).unwrap();
        assert!(s.residuals().iter().all(|r| *r <= 1e-10));
        assert!((s.root_sum().re + 2.0).abs() < 1e-12 && s.root_sum().im.abs() < 1e-12);
        assert!(s.lambda0 < -1.0 && s.omega0 >= 0.0);
        assert_eq!(s.roots.iter().filter(|r| r.re > 0.0).count(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(characteristic_roots(0.0, 1.0).is_err());
        assert!(characteristic_roots(1.0, -1.0).is_err());
    }

    #[test]
    fn selection_ignores_order() {
        let rs = [Root { re: -1.5, im: -0.3 }, Root { re: 1.0, im: 0.0 }, Root { re: -1.5, im: 0.3 }];
        let mut rev = rs;
        rev.reverse();
        assert_eq!(select_z0(&rs), select_z0(&rev));
        assert_eq!(select_z0(&rs).unwrap().im, 0.3);
    }

    #[test]
    fn decay_fit_on_manufactured_envelope() {
        let norms: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let xi = 2.0 + 0.05 * i as f64;
                let y = (-1.5 * xi).exp() * (0.1 * (2.0 * xi).cos() + 0.3 * (2.0 * xi).sin());
                let q = (-1.5 * xi).exp() * 0.2 * (2.0 * xi).cos();
                (xi, y * y + q * q)
            })
            .collect();
        let (l, w) = decay_fit(&norms);
        assert!((l + 1.5).abs() < 1e-4, "{l}");
        assert!((w - 2.0).abs() < 1e-3, "{w}");
    }
}
