//! Adaptive Simpson quadrature with Richardson correction.

const MAX_DEPTH: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Sum of the local `|S₂ − S₁| / 15` error estimates.
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn recurse<F: Fn(f64) -> f64>(f: &F, p: Panel, eps: f64, depth: u32, acc: &mut Quadrature) {
    let m = 0.5 * (p.a + p.b);
    let (lm, rm) = (0.5 * (p.a + m), 0.5 * (m + p.b));
    let (flm, frm) = (f(lm), f(rm));
    acc.evaluations += 2;
    let h = p.b - p.a;
    let left = h * (p.fa + 4.0 * flm + p.fm) / 12.0;
    let right = h * (p.fm + 4.0 * frm + p.fb) / 12.0;
    let delta = left + right - p.whole;
    if depth == 0 || delta.abs() <= 15.0 * eps || m <= p.a || m >= p.b {
        acc.value += left + right + delta / 15.0;
        acc.error += delta.abs() / 15.0;
        return;
    }
    recurse(f, Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left }, 0.5 * eps, depth - 1, acc);
    recurse(f, Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right }, 0.5 * eps, depth - 1, acc);
}

/// Integrates `f` over `[a, b]` to absolute tolerance `eps`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, eps: f64) -> Quadrature {
    let mut acc = Quadrature { value: 0.0, error: 0.0, evaluations: 3 };
    if b <= a {
        return acc;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0;
    recurse(&f, Panel { a, b, fa, fm, fb, whole }, eps, MAX_DEPTH, &mut acc);
    acc
}
