use lifting::model::{
    classify, energy_e1, energy_e1_rate, energy_e2, energy_e2_rate, from_phase, margins, phase_rhs, rhs_physical,
    to_phase, PhaseState,
};
use lifting::{integrate, ProblemConfig, ProfileState, Region};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use proptest::prelude::*;

fn cfg(m: f64) -> ProblemConfig {
    let b = (m == 4.0).then_some(1.0);
    ProblemConfig::new(m, b).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 { 0.0 } else { (a - b).abs() / s }
}

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

#[test]
fn alpha_values() {
    assert_eq!(cfg(2.0).alpha, 0.5);
    assert_eq!(cfg(3.0).alpha, 1.0);
    assert_eq!(ProblemConfig::new(4.0, Some(0.7)).unwrap().alpha, 0.7);
    assert!(ProblemConfig::new(4.0, None).is_err());
    assert!(ProblemConfig::new(0.0, None).is_err());
    assert!(ProblemConfig::new(4.5, None).is_err());
}

#[test]
fn fourth_derivative_examples() {
    let d = rhs_physical(&ProfileState::new(0.0, 1.0, 0.0, 0.3, 0.0), &cfg(2.0)).unwrap();
    assert_eq!(d.fyyyy, -0.5);
    assert_eq!(d.vector(), [0.0, 0.3, 0.0, -0.5]);
    let d = rhs_physical(&ProfileState::new(1.0, 1.0, 0.0, 0.0, 0.0), &cfg(3.0)).unwrap();
    assert_eq!(d.fyyyy, -1.0);
    assert!(rhs_physical(&ProfileState::new(1.0, 0.0, 0.0, 0.0, 0.0), &cfg(2.0)).is_err());
}

/// Exact rational evaluation of `f⁽⁴⁾ = (−α(f − y f_y) − 2 f f_y f_yyy) / f²` for m = 2.
fn fourth_derivative_exact(s: &ProfileState) -> f64 {
    let (y, f, fy, f3) = (q(s.y), q(s.f), q(s.fy), q(s.fyyy));
    let alpha = BigRational::one() / BigRational::from_integer(2.into());
    let two = BigRational::from_integer(2.into());
    let num = -(alpha * (f.clone() - y * fy.clone())) - two * f.clone() * fy * f3;
    (num / (f.clone() * f)).to_f64().unwrap()
}

/// Exact rational `E1` for m = 2.
fn e1_exact(s: &ProfileState) -> f64 {
    let (y, f, fy, fyy, f3) = (q(s.y), q(s.f), q(s.fy), q(s.fyy), q(s.fyyy));
    let half = BigRational::one() / BigRational::from_integer(2.into());
    let val = half.clone() * (f.clone() * fy.clone() - half * y * fy.clone() * fy) + f.clone() * f * fyy * f3;
    val.to_f64().unwrap()
}

fn dyadic() -> impl Strategy<Value = f64> {
    (1i64..4096).prop_map(|k| k as f64 / 256.0)
}

fn signed_dyadic() -> impl Strategy<Value = f64> {
    (-4096i64..4096).prop_map(|k| k as f64 / 512.0)
}

proptest! {
    #[test]
    fn fourth_derivative_matches_exact_rationals(
        y in dyadic(), f in dyadic(), fy in signed_dyadic(), fyy in signed_dyadic(), f3 in signed_dyadic()
    ) {
        let s = ProfileState::new(y, f, fy, fyy, f3);
        let got = rhs_physical(&s, &cfg(2.0)).unwrap().fyyyy;
        let want = fourth_derivative_exact(&s);
        prop_assert!((got - want).abs() <= 1e-13 * (1.0 + want.abs()), "{got} vs {want}");
    }

    #[test]
    fn e1_matches_exact_rationals(
        y in dyadic(), f in dyadic(), fy in signed_dyadic(), fyy in signed_dyadic(), f3 in signed_dyadic()
    ) {
        let s = ProfileState::new(y, f, fy, fyy, f3);
        let got = energy_e1(&s, &cfg(2.0));
        let want = e1_exact(&s);
        let scale = 0.5 * (f * fy).abs() + 0.25 * y * fy * fy + f * f * (fyy * f3).abs();
        prop_assert!((got - want).abs() <= 1e-14 * scale, "{got} vs {want}");
    }
}

#[test]
fn phase_examples() {
    let p = to_phase(&ProfileState::new(1.0, 1.0, 1.0, 0.0, 0.0), 2.0).unwrap();
    assert_eq!((p.xi, p.phi, p.w, p.q, p.z), (0.0, 1.0, 1.0, 0.0, 0.0));
    let p = to_phase(&ProfileState::new(1.0, 2.0, 0.0, 0.5, 0.25), 3.0).unwrap();
    assert_eq!(p.w, 0.0);
    assert_eq!(p.phi, 2.0);
    let s = from_phase(&PhaseState { xi: 0.0, phi: 1.0, w: 1.0, q: 0.0, z: 0.0 }, 2.0).unwrap();
    assert_eq!((s.y, s.f, s.fy, s.fyy, s.fyyy), (1.0, 1.0, 1.0, 0.0, 0.0));
    assert!(to_phase(&ProfileState::new(0.0, 1.0, 0.0, 1.0, 0.0), 2.0).is_err());
    assert!(to_phase(&ProfileState::new(1.0, -1.0, 0.0, 1.0, 0.0), 2.0).is_err());
}

fn ms() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.5), Just(1.0), Just(2.0), Just(3.0), Just(3.5), Just(4.0), 0.2f64..4.0]
}

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

fn profile_state() -> impl Strategy<Value = ProfileState> {
    (log_uniform(1e-3, 1e3), log_uniform(1e-3, 1e3), -10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0)
        .prop_map(|(y, f, fy, fyy, fyyy)| ProfileState::new(y, f, fy, fyy, fyyy))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn physical_phase_round_trip(s in profile_state(), m in ms()) {
        let back = from_phase(&to_phase(&s, m).unwrap(), m).unwrap();
        for (a, b) in [(back.y, s.y), (back.f, s.f), (back.fy, s.fy), (back.fyy, s.fyy), (back.fyyy, s.fyyy)] {
            prop_assert!(rel(a, b) <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn phase_physical_round_trip(
        xi in -5.0f64..5.0, phi in log_uniform(1e-2, 1e2), w in -3.0f64..3.0, qv in -3.0f64..3.0, z in -3.0f64..3.0,
        m in ms()
    ) {
        let p = PhaseState { xi, phi, w, q: qv, z };
        let back = to_phase(&from_phase(&p, m).unwrap(), m).unwrap();
        prop_assert!((back.xi - xi).abs() <= 1e-12 * (1.0 + xi.abs()));
        for (a, b) in [(back.phi, phi), (back.w, w), (back.q, qv), (back.z, z)] {
            prop_assert!(rel(a, b) <= 1e-12 || (a - b).abs() <= 1e-14, "{a} vs {b}");
        }
    }
}

/// `d/dξ` of the phase map along the physical flow, by central differences of the transform.
fn transported_rhs(s: &ProfileState, m: f64, c: &ProblemConfig) -> [f64; 4] {
    let d = rhs_physical(s, c).unwrap();
    let flow = [1.0, s.fy, d.fyy, d.fyyy, d.fyyyy];
    let base = [s.y, s.f, s.fy, s.fyy, s.fyyy];
    let mut out = [0.0; 4];
    for k in 0..5 {
        let h = 1e-6 * base[k].abs().max(1e-3);
        let shifted = |sign: f64| {
            let mut v = base;
            v[k] += sign * h;
            to_phase(&ProfileState::new(v[0], v[1], v[2], v[3], v[4]), m).unwrap().vector()
        };
        let (p, n) = (shifted(1.0), shifted(-1.0));
        for i in 0..4 {
            out[i] += s.y * flow[k] * (p[i] - n[i]) / (2.0 * h);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn phase_system_is_the_transported_profile_equation(
        y in log_uniform(0.1, 10.0), f in log_uniform(0.1, 10.0),
        fy in -2.0f64..2.0, fyy in -2.0f64..2.0, fyyy in -2.0f64..2.0, m in ms()
    ) {
        let c = cfg(m);
        let s = ProfileState::new(y, f, fy, fyy, fyyy);
        let want = transported_rhs(&s, m, &c);
        let got = phase_rhs(&to_phase(&s, m).unwrap(), &c).unwrap().vector();
        let scale = want.iter().chain(got.iter()).fold(0.0f64, |a, x| a.max(x.abs()));
        for i in 0..4 {
            prop_assert!((got[i] - want[i]).abs() <= 1e-6 * scale, "component {i}: {} vs {}", got[i], want[i]);
        }
    }

    #[test]
    fn classification_agrees_with_phase_signs(
        y in log_uniform(1e-2, 1e2), f in log_uniform(1e-2, 1e2),
        fy in -3.0f64..3.0, fyy in -3.0f64..3.0, fyyy in -3.0f64..3.0, m in ms()
    ) {
        let c = cfg(m);
        let s = ProfileState::new(y, f, fy, fyy, fyyy);
        let p = to_phase(&s, m).unwrap();
        let [mg, m2, m3] = margins(&s, c.sign_margin);
        // thresholds carried through the positive prefactors of the transform
        let t = [
            mg / f,
            y.powf(2.0 / 3.0) * f.powf((m - 3.0) / 3.0) * m2,
            y.cbrt() * f.powf((2.0 * m - 3.0) / 3.0) * m3,
        ];
        let v = [p.w - 1.0, p.q, p.z];
        let near = (0..3).any(|i| (v[i].abs() - t[i]).abs() <= 1e-9 * (v[i].abs() + t[i]) + 1e-12);
        prop_assume!(!near);
        let phase_region = if (0..3).all(|i| v[i] > t[i]) {
            Region::SigmaPlus
        } else if (0..3).all(|i| v[i] < -t[i]) {
            Region::SigmaMinus
        } else {
            Region::Undecided
        };
        prop_assert_eq!(classify(&s, &c).region, phase_region);
    }
}

#[test]
fn phase_rhs_examples() {
    for m in [0.5, 1.0, 2.0, 3.0] {
        let c = cfg(m);
        let d = phase_rhs(&PhaseState { xi: 0.3, phi: 1.0, w: 1.0, q: 0.0, z: 0.0 }, &c).unwrap();
        assert!((d.dphi - (1.0 - 4.0 / m)).abs() < 1e-15);
        assert_eq!((d.dw, d.dq, d.dz), (0.0, 0.0, 0.0));
        assert!(d.dphi != 0.0);
    }
    for a in [0.3, 0.86, 2.0] {
        let d = phase_rhs(&PhaseState { xi: -1.0, phi: a, w: 1.0, q: 0.0, z: 0.0 }, &cfg(4.0)).unwrap();
        assert_eq!(d.vector(), [0.0; 4]);
    }
}

#[test]
fn classification_examples() {
    let c = cfg(2.0);
    assert_eq!(classify(&ProfileState::new(1.0, 1.0, 3.0, 1.0, 1.0), &c).region, Region::SigmaPlus);
    assert_eq!(classify(&ProfileState::new(1.0, 1.0, 0.0, -1.0, -1.0), &c).region, Region::SigmaMinus);
    let tag = classify(&ProfileState::new(1.0, 1.0, 1.0, 1.0, -1.0), &c);
    assert_eq!(tag.region, Region::Undecided);
    assert_eq!(tag.y, None);
}

#[test]
fn energy_examples() {
    let c = cfg(2.0);
    assert_eq!(energy_e1(&ProfileState::new(0.0, 1.0, 0.0, 0.7, 0.0), &c), 0.0);
    assert_eq!(energy_e1(&ProfileState::new(2.0, 3.0, 0.0, -1.5, 0.0), &c), 0.0);
    let cone = ProfileState::new(5.0, 5.0 * 1.3, 1.3, 0.0, 0.0);
    assert_eq!(energy_e2(&cone, &c).unwrap(), 0.0);
    assert_eq!(energy_e2(&ProfileState::new(1.0, 1.0, 0.0, 0.0, 0.0), &cfg(3.0)).unwrap(), -0.5);
    assert!(energy_e2(&ProfileState::new(0.0, 1.0, 0.0, 0.0, 0.0), &c).is_err());
}

#[test]
fn e2_diverges_at_the_seed() {
    for y0 in [1e-2, 1e-3, 1e-4] {
        let c = cfg(2.0).with_y_start(y0);
        let s = lifting::seed(0.6, &c).state;
        // f ≈ 1 and y f_y = O(y²) near the origin, so E2 ≈ −α/(2y)
        assert!(energy_e2(&s, &c).unwrap() < -c.alpha / (4.0 * y0));
    }
}

#[test]
fn energy_rates_match_centered_differences() {
    for (m, kappa) in [(1.0, 0.5), (2.0, 0.62), (2.0, 1.5), (3.0, 0.8)] {
        let c = cfg(m).with_y_max(20.0);
        let t = integrate(kappa, &c).unwrap();
        let end = t.y_end;
        let mut checked = 0;
        for i in 1..40 {
            let y = c.y_start + (end - c.y_start) * i as f64 / 40.0;
            let h = 1e-3 * y.min(1.0);
            let (Some(lo), Some(mid), Some(hi)) = (t.state_at(y - h), t.state_at(y), t.state_at(y + h)) else {
                continue;
            };
            if mid.f <= 10.0 * c.f_min {
                continue;
            }
            let fd1 = (energy_e1(&hi, &c) - energy_e1(&lo, &c)) / (2.0 * h);
            let fd2 = (energy_e2(&hi, &c).unwrap() - energy_e2(&lo, &c).unwrap()) / (2.0 * h);
            assert!(rel(fd1, energy_e1_rate(&mid, &c)) <= 1e-4, "E1 m={m} κ={kappa} y={y}");
            assert!(rel(fd2, energy_e2_rate(&mid, &c)) <= 1e-4, "E2 m={m} κ={kappa} y={y}");
            checked += 1;
        }
        assert!(checked > 10);
    }
}
