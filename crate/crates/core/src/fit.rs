//! Small least-squares helpers shared by the asymptotic fits.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / nf).sqrt();
    Some(LineFit { slope, intercept, residual })
}

/// Intercept of `y ≈ slope·x + c` with the slope held fixed.
pub fn intercept_fit(x: &[f64], y: &[f64], slope: f64) -> Option<LineFit> {
    if x.is_empty() || x.len() != y.len() {
        return None;
    }
    let nf = x.len() as f64;
    let intercept = x.iter().zip(y).map(|(a, b)| b - slope * a).sum::<f64>() / nf;
    let residual = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / nf).sqrt();
    Some(LineFit { slope, intercept, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lsq {
    pub coef: Vec<f64>,
    /// Euclidean norm of the residual vector.
    pub residual: f64,
    /// Ratio of extreme singular values of the column-scaled design.
    pub condition: f64,
}

/// Linear least squares via SVD, with columns scaled to unit norm first.
pub fn lstsq(design: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<Lsq> {
    let ncol = design.ncols();
    if design.nrows() < ncol || ncol == 0 {
        return None;
    }
    let norms: Vec<f64> = (0..ncol).map(|j| design.column(j).norm()).collect();
    if norms.iter().any(|n| !(n.is_finite() && *n > 0.0)) {
        return None;
    }
    let mut scaled = design.clone();
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / n);
    }
    let svd = scaled.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let sol = svd.solve(rhs, smax * f64::EPSILON * ncol as f64).ok()?;
    let coef: Vec<f64> = sol.iter().zip(&norms).map(|(c, n)| c / n).collect();
    let residual = (&scaled * sol - rhs).norm();
    Some(Lsq { coef, residual, condition })
}
