//! Dormand–Prince 5(4) with FSAL stages and 4th-order dense output.

#[rustfmt::skip]
mod tableau {
    pub const C2: f64 = 1.0 / 5.0;
    pub const C3: f64 = 3.0 / 10.0;
    pub const C4: f64 = 4.0 / 5.0;
    pub const C5: f64 = 8.0 / 9.0;

    pub const A21: f64 = 1.0 / 5.0;
    pub const A31: f64 = 3.0 / 40.0;
    pub const A32: f64 = 9.0 / 40.0;
    pub const A41: f64 = 44.0 / 45.0;
    pub const A42: f64 = -56.0 / 15.0;
    pub const A43: f64 = 32.0 / 9.0;
    pub const A51: f64 = 19372.0 / 6561.0;
    pub const A52: f64 = -25360.0 / 2187.0;
    pub const A53: f64 = 64448.0 / 6561.0;
    pub const A54: f64 = -212.0 / 729.0;
    pub const A61: f64 = 9017.0 / 3168.0;
    pub const A62: f64 = -355.0 / 33.0;
    pub const A63: f64 = 46732.0 / 5247.0;
    pub const A64: f64 = 49.0 / 176.0;
    pub const A65: f64 = -5103.0 / 18656.0;
    pub const A71: f64 = 35.0 / 384.0;
    pub const A73: f64 = 500.0 / 1113.0;
    pub const A74: f64 = 125.0 / 192.0;
    pub const A75: f64 = -2187.0 / 6784.0;
    pub const A76: f64 = 11.0 / 84.0;

    pub const E1: f64 = 71.0 / 57600.0;
    pub const E3: f64 = -71.0 / 16695.0;
    pub const E4: f64 = 71.0 / 1920.0;
    pub const E5: f64 = -17253.0 / 339200.0;
    pub const E6: f64 = 22.0 / 525.0;
    pub const E7: f64 = -1.0 / 40.0;

    pub const D1: f64 = -12715105075.0 / 11282082432.0;
    pub const D3: f64 = 87487479700.0 / 32700410799.0;
    pub const D4: f64 = -10690763975.0 / 1880347072.0;
    pub const D5: f64 = 701980252875.0 / 199316789632.0;
    pub const D6: f64 = -1453857185.0 / 822651844.0;
    pub const D7: f64 = 69997945.0 / 29380423.0;
}
use tableau::*;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
}

type Attempt<const N: usize> = ([f64; N], [f64; N], [f64; N], [[f64; N]; 7]);

/// One accepted step together with its continuous extension.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    t_end: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    cont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t_end
    }

    pub fn eval(&self, t: f64) -> [f64; N] {
        if t == self.t_end {
            return self.y1;
        }
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        let c = &self.cont;
        std::array::from_fn(|i| {
            c[0][i] + theta * (c[1][i] + theta1 * (c[2][i] + theta * (c[3][i] + theta1 * c[4][i])))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepFailure {
    /// Step size fell below `h_min` while rejecting.
    Underflow { t: f64 },
}

/// Stepper state. The right-hand side reports `None` where it cannot be evaluated.
pub struct Dp5<F, const N: usize> {
    rhs: F,
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
    tol: Tolerances,
    pub accepted: usize,
    pub rejected: usize,
}

#[inline]
fn combine<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn finite<const N: usize>(v: &[f64; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl<F, const N: usize> Dp5<F, N>
where
    F: FnMut(f64, &[f64; N]) -> Option<[f64; N]>,
{
    /// Returns `None` if the right-hand side fails at the initial point.
    pub fn new(mut rhs: F, t0: f64, y0: [f64; N], tol: Tolerances) -> Option<Self> {
        let k1 = rhs(t0, &y0).filter(finite)?;
        let mut s = Dp5 { rhs, t: t0, y: y0, k1, h: 0.0, tol, accepted: 0, rejected: 0 };
        s.h = s.initial_step();
        Some(s)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    fn scale(&self, a: &[f64; N], b: &[f64; N]) -> [f64; N] {
        std::array::from_fn(|i| self.tol.atol + self.tol.rtol * a[i].abs().max(b[i].abs()))
    }

    fn rms(v: &[f64; N], sc: &[f64; N]) -> f64 {
        (v.iter().zip(sc).map(|(x, s)| (x / s).powi(2)).sum::<f64>() / N as f64).sqrt()
    }

    fn initial_step(&mut self) -> f64 {
        let sc = self.scale(&self.y, &self.y);
        let d0 = Self::rms(&self.y, &sc);
        let d1 = Self::rms(&self.k1, &sc);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.tol.h_max);
        let y1 = combine(&self.y, h0, &[(1.0, &self.k1)]);
        let d2 = match (self.rhs)(self.t + h0, &y1).filter(finite) {
            Some(k) => {
                let diff: [f64; N] = std::array::from_fn(|i| k[i] - self.k1[i]);
                Self::rms(&diff, &sc) / h0
            }
            None => return h0 * 1e-3,
        };
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.tol.h_max)
    }

    /// Sets the next trial step, typically to land on an output boundary.
    pub fn limit_step(&mut self, h: f64) {
        self.h = self.h.min(h);
    }

    /// Overwrites the state between steps; the FSAL stage is recomputed.
    pub fn reset(&mut self, y: [f64; N]) -> bool {
        match (self.rhs)(self.t, &y).filter(finite) {
            Some(k) => {
                self.y = y;
                self.k1 = k;
                true
            }
            None => false,
        }
    }

    /// `(y1, k7, error estimate, stages)` of a trial step, `None` on a non-finite stage.
    fn attempt(&mut self, h: f64) -> Option<Attempt<N>> {
        let (t, y, k1) = (self.t, self.y, self.k1);
        let f = &mut self.rhs;
        let mut eval = |c: f64, yy: [f64; N]| f(t + c * h, &yy).filter(finite);
        let k2 = eval(C2, combine(&y, h, &[(A21, &k1)]))?;
        let k3 = eval(C3, combine(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = eval(C4, combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = eval(C5, combine(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let k6 = eval(
            1.0,
            combine(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let y1 = combine(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = eval(1.0, y1)?;
        let err: [f64; N] = std::array::from_fn(|i| {
            h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        Some((y1, k7, err, [k1, k2, k3, k4, k5, k6, k7]))
    }

    fn accept(&mut self, h: f64, t1: f64, y1: [f64; N], k7: [f64; N], k: &[[f64; N]; 7]) -> DenseStep<N> {
        let y0 = self.y;
        let ydiff: [f64; N] = std::array::from_fn(|i| y1[i] - y0[i]);
        let bspl: [f64; N] = std::array::from_fn(|i| h * k[0][i] - ydiff[i]);
        let cont = [
            y0,
            ydiff,
            bspl,
            std::array::from_fn(|i| ydiff[i] - h * k7[i] - bspl[i]),
            std::array::from_fn(|i| {
                h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i])
            }),
        ];
        let step = DenseStep { t0: self.t, h, t_end: t1, y0, y1, cont };
        self.t = t1;
        self.y = y1;
        self.k1 = k7;
        self.accepted += 1;
        step
    }

    /// Steps to `t1` with no error control, so that runs sharing a step
    /// sequence do identical arithmetic per component.
    pub fn step_fixed(&mut self, t1: f64) -> Option<DenseStep<N>> {
        let h = t1 - self.t;
        let (y1, k7, _, k) = self.attempt(h)?;
        Some(self.accept(h, t1, y1, k7, &k))
    }

    /// Advances by one accepted step, never beyond `t_end`.
    pub fn step(&mut self, t_end: f64) -> Result<DenseStep<N>, StepFailure> {
        let mut reject_streak = false;
        loop {
            let remaining = t_end - self.t;
            let mut h = self.h.min(self.tol.h_max);
            if h >= remaining || (remaining - h) < 1e-12 * remaining.abs().max(self.t.abs()) {
                h = remaining;
            }
            if h < remaining && h < self.tol.h_min.max(f64::EPSILON * self.t.abs() * 4.0) {
                return Err(StepFailure::Underflow { t: self.t });
            }
            let Some((y1, k7, err, k)) = self.attempt(h) else {
                self.rejected += 1;
                self.h = h * 0.25;
                reject_streak = true;
                continue;
            };
            let sc = self.scale(&self.y, &y1);
            let e = Self::rms(&err, &sc);
            if e <= 1.0 {
                let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                let fac = if reject_streak { fac.min(1.0) } else { fac };
                let t1 = if h == remaining { t_end } else { self.t + h };
                let step = self.accept(h, t1, y1, k7, &k);
                self.h = h * fac;
                return Ok(step);
            }
            self.rejected += 1;
            reject_streak = true;
            self.h = h * (0.9 * e.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
}

/// Bisects on `[a, b]` for the first point where `pred` holds, assuming `pred(b)`.
pub fn bisect_first(mut a: f64, mut b: f64, tol: f64, mut pred: impl FnMut(f64) -> bool) -> f64 {
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if pred(mid) {
            b = mid;
        } else {
            a = mid;
        }
    }
    b
}
