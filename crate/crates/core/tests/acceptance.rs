//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use lifting::integrator::Sample;
use lifting::merging::{integrate_correction, solve_correction, CorrectionProblem, CorrectionSolution};
use lifting::model::{classify, diagnostics, to_phase};
use lifting::shooting::{dissipation_integral, k0_theory, kappa_ceiling, scan, shoot, ShootingResult, DEFAULT_KAPPA_TOL};
use lifting::spectral::{characteristic_roots, select_z0, tail_expansion_check, Root};
use lifting::{integrate, IntegrateOptions, ProblemConfig, Region, TerminalEvent, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ITEM_BUDGET: Duration = Duration::from_secs(60);
const BRACKET_MS: [f64; 5] = [0.5, 1.0, 2.0, 3.0, 3.5];
const ALL_MS: [f64; 6] = [0.5, 1.0, 2.0, 3.0, 3.5, 4.0];

type Outcome = Result<String, String>;
type Item = (&'static str, fn() -> Outcome);

fn cfg(m: f64) -> ProblemConfig {
    let c = ProblemConfig::new(m, (m == 4.0).then_some(1.0)).unwrap();
    c.with_y_max(ProblemConfig::suggested_y_max(m))
}

/// Accepted profile at the default radius (`scale = 1`) or at a multiple of it.
fn accepted(m: f64, scale: f64) -> ShootingResult {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), ShootingResult>>> = OnceLock::new();
    let key = (m.to_bits(), scale.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(r) = cache.lock().unwrap().get(&key) {
        return r.clone();
    }
    let c = cfg(m);
    let r = shoot(&c.with_y_max(scale * c.y_max), DEFAULT_KAPPA_TOL).unwrap();
    cache.lock().unwrap().insert(key, r.clone());
    r
}

fn kappa_grid(c: &ProblemConfig) -> Vec<f64> {
    let (lo, hi) = (-0.5, kappa_ceiling(c) + 0.5);
    (0..64).map(|i| lo + (hi - lo) * i as f64 / 63.0).collect()
}

fn check(ok: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(what()) }
}

fn bracket() -> Outcome {
    let mut widths = Vec::new();
    for m in BRACKET_MS {
        let c = cfg(m);
        let r = accepted(m, 1.0);
        let top = kappa_ceiling(&c);
        check(0.0 < r.kappa_lo && r.kappa_lo < r.kappa_hi && r.kappa_hi < top, || {
            format!("m={m}: ({}, {}) outside (0, {top})", r.kappa_lo, r.kappa_hi)
        })?;
        let width = r.kappa_hi - r.kappa_lo;
        check(width <= 1e-10, || format!("m={m}: width {width:e}"))?;
        let below = integrate(-0.1, &c).map_err(|e| e.to_string())?.event;
        let above = integrate(top + 0.1, &c).map_err(|e| e.to_string())?.event;
        check(below == TerminalEvent::EnteredSigmaMinus, || format!("m={m}: κ=-0.1 gave {below:?}"))?;
        check(above == TerminalEvent::EnteredSigmaPlus, || format!("m={m}: κ=√(12α)+0.1 gave {above:?}"))?;
        widths.push(width);
    }
    let worst = widths.iter().cloned().fold(0.0, f64::max);
    Ok(format!("5 exponents bracketed, widest final bracket {worst:.1e}"))
}

fn reversal(t: &Trajectory) -> Option<f64> {
    let mut entered = None;
    for s in t.samples.iter().filter(|s| s.state.y > 0.0) {
        match (entered, classify(&s.state, &t.cfg).region) {
            (_, Region::Undecided) => {}
            (None, r) => entered = Some(r),
            (Some(e), r) if e != r => return Some(s.state.y),
            _ => {}
        }
    }
    None
}

fn persistence() -> Outcome {
    let opts = IntegrateOptions { stop_on_region: false, ..Default::default() };
    let mut decisive = 0;
    for m in ALL_MS {
        let c = cfg(m).with_y_max(100.0);
        for (k, t) in kappa_grid(&c).iter().zip(scan(&kappa_grid(&c), &c, &opts)) {
            let t = t.map_err(|e| format!("m={m} κ={k}: {e}"))?;
            if let Some(y) = reversal(&t) {
                return Err(format!("m={m} κ={k}: region reversed at y={y}"));
            }
            decisive += usize::from(t.samples.iter().any(|s| classify(&s.state, &c).region != Region::Undecided));
        }
    }
    Ok(format!("{} trajectories, {decisive} reached a region, no reversals", 64 * ALL_MS.len()))
}

/// Per-step checks of the two energies along a trajectory.
fn energies_monotone(t: &Trajectory) -> Result<(), String> {
    let c = &t.cfg;
    for w in t.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        check(a.diag.e1 - b.diag.e1 <= c.rtol * (1.0 + a.diag.e1.abs()), || format!("E1 drops at y={}", b.state.y))?;
        check(b.state.y <= c.y_start || b.diag.e1 > 0.0, || format!("E1 ≤ 0 at y={}", b.state.y))?;
        if a.state.y >= c.y_start {
            check(a.diag.e2 - b.diag.e2 <= c.rtol * (1.0 + a.diag.e2.abs()), || format!("E2 drops at y={}", b.state.y))?;
        }
    }
    Ok(())
}

/// Largest relative gap between a centred difference of `E1` and its rate.
fn energy_rate_gap(t: &Trajectory) -> f64 {
    let c = &t.cfg;
    let n = t.samples.len();
    let mut worst = 0.0f64;
    for s in &t.samples[1..n - 1] {
        let y = s.state.y;
        let h = 1e-3 * y;
        if y - h <= c.y_start || y + h >= t.y_end {
            continue;
        }
        let (lo, hi) = (t.state_at(y - h).unwrap(), t.state_at(y + h).unwrap());
        let fd = (diagnostics(&hi, c).e1 - diagnostics(&lo, c).e1) / (2.0 * h);
        let st = &s.state;
        let rate = c.alpha / 2.0 * st.fy * st.fy + st.f.powf(c.m) * st.fyyy * st.fyyy;
        worst = worst.max((fd - rate).abs() / rate);
    }
    worst
}

fn energy() -> Outcome {
    let mut count = 0;
    let mut gap = 0.0f64;
    for m in ALL_MS {
        let c = cfg(m);
        let r = accepted(m, 1.0);
        energies_monotone(&r.trajectory).map_err(|e| format!("accepted m={m}: {e}"))?;
        gap = gap.max(energy_rate_gap(&r.trajectory));
        let scans = scan(&kappa_grid(&c), &c.with_y_max(100.0), &IntegrateOptions::default());
        for (k, t) in kappa_grid(&c).iter().zip(scans) {
            let t = t.map_err(|e| format!("m={m} κ={k}: {e}"))?;
            energies_monotone(&t).map_err(|e| format!("m={m} κ={k}: {e}"))?;
            gap = gap.max(energy_rate_gap(&t));
            count += 1;
        }
        count += 1;
    }
    check(gap <= 1e-4, || format!("finite-difference E1 rate off by {gap:.2e}"))?;
    Ok(format!("{count} trajectories monotone, E1 rate gap {gap:.1e}"))
}

fn far_field() -> Outcome {
    let mut worst_spread = 0.0f64;
    let mut worst_shift = 0.0f64;
    for m in BRACKET_MS {
        let (r, d) = (accepted(m, 1.0), accepted(m, 2.0));
        check(r.a > 0.0, || format!("m={m}: a = {}", r.a))?;
        let spread = r.slope.spread / r.a;
        let shift = (d.a - r.a).abs() / r.a;
        check(spread <= 1e-4, || format!("m={m}: spread {spread:e}"))?;
        check(shift <= 1e-6, || format!("m={m}: doubling y_max moved a by {shift:e}"))?;
        worst_spread = worst_spread.max(spread);
        worst_shift = worst_shift.max(shift);
    }
    Ok(format!("spread ≤ {worst_spread:.1e}·a, doubling shift ≤ {worst_shift:.1e}·a"))
}

fn rate() -> Outcome {
    let mut parts = Vec::new();
    for m in [1.0, 2.0, 3.0] {
        let r = accepted(m, 1.0);
        let fit = r.rate_fit.as_ref().ok_or(format!("m={m}: no rate fit"))?;
        let want = (4.0 - m) / 3.0;
        let err = (fit.exponent_fitted - want).abs() / want;
        check(err <= 0.1, || format!("m={m}: exponent {} vs {want}", fit.exponent_fitted))?;
        let direct = 0.375 * (4.0 - m).powf(4.0 / 3.0) * r.a.powf(m / 3.0);
        check(k0_theory(m, r.a) == direct, || format!("m={m}: K0_theory {} vs {direct}", k0_theory(m, r.a)))?;
        parts.push(format!("m={m} {:.4}", fit.exponent_fitted));
    }
    Ok(format!("fitted exponents {}", parts.join(", ")))
}

fn spectrum() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let (a, b) = (rng.random_range(0.1..10.0), rng.random_range(0.1..10.0));
        let s = characteristic_roots(a, b).map_err(|e| format!("a={a} b={b}: {e}"))?;
        let (sum, prod, want) = (s.root_sum(), s.root_product(), 2.0 + b / a.powi(4));
        check((sum.re + 2.0).abs() <= 1e-12 && sum.im.abs() <= 1e-12, || format!("a={a} b={b}: root sum {sum}"))?;
        check((prod.re - want).abs() <= 1e-12 * want && prod.im.abs() <= 1e-12 * want, || {
            format!("a={a} b={b}: root product {prod} vs {want}")
        })?;
        check(s.residuals().iter().all(|r| *r <= 1e-10), || format!("a={a} b={b}: residuals {:?}", s.residuals()))?;
        check(s.lambda0 < -1.0, || format!("a={a} b={b}: λ0 = {}", s.lambda0))?;
        for perm in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let shuffled: Vec<Root> = perm.iter().map(|&i| s.roots[i]).collect();
            check(select_z0(&shuffled) == Some(s.z0), || format!("a={a} b={b}: z0 depends on root order"))?;
        }
    }
    let r = accepted(4.0, 1.0);
    let s = characteristic_roots(r.a, 1.0).map_err(|e| e.to_string())?;
    let tail = tail_expansion_check(&r.trajectory, &s).map_err(|e| e.to_string())?;
    let err = (tail.decay_exponent - s.lambda0).abs() / s.lambda0.abs();
    check(err <= 0.1, || format!("decay {} vs λ0 {}", tail.decay_exponent, s.lambda0))?;
    Ok(format!("1000 random cubics ok; m=4 decay {:.6} vs λ0 {:.6}", tail.decay_exponent, s.lambda0))
}

fn dissipation() -> Outcome {
    let mut parts = Vec::new();
    for m in BRACKET_MS {
        let (r, d) = (accepted(m, 1.0), accepted(m, 2.0));
        let di = &r.dissipation;
        check(di.value > 0.0 && di.value.is_finite(), || format!("m={m}: D = {}", di.value))?;
        check(di.tail <= 1e-6 * di.value, || format!("m={m}: tail {:e} of D {}", di.tail, di.value))?;
        let again = dissipation_integral(&d.trajectory, &d.trajectory.cfg).map_err(|e| e.to_string())?;
        let shift = (again.value - di.value).abs();
        check(shift < di.tail, || format!("m={m}: doubling moved D by {shift:e}, reported tail {:e}", di.tail))?;
        check(di.energy_mismatch() <= 1e-5, || format!("m={m}: energy mismatch {:e}", di.energy_mismatch()))?;
        parts.push(format!("m={m} D={:.6}", di.value));
    }
    Ok(parts.join(", "))
}

/// Classical RK4 on the phase system in ξ = ln y.
fn phase_step(m: f64, alpha: f64, v: [f64; 4], h: f64) -> [f64; 4] {
    let f = |v: [f64; 4]| {
        let [phi, w, q, z] = v;
        let s = phi.powf(-m / 3.0);
        [
            phi * (w - 4.0 / m),
            q * s + w * (1.0 - w),
            (2.0 / 3.0 + (m - 3.0) / 3.0 * w) * q + z * s,
            alpha * (w - 1.0) * s + (1.0 / 3.0 - (m + 3.0) / 3.0 * w) * z,
        ]
    };
    let add = |a: [f64; 4], b: [f64; 4], k: f64| std::array::from_fn::<f64, 4, _>(|i| a[i] + k * b[i]);
    let k1 = f(v);
    let k2 = f(add(v, k1, h / 2.0));
    let k3 = f(add(v, k2, h / 2.0));
    let k4 = f(add(v, k3, h));
    std::array::from_fn(|i| v[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn oracle() -> Outcome {
    let mut parts = Vec::new();
    for m in [1.0, 2.0, 4.0] {
        let c = cfg(m).with_y_max(12.0);
        let t = integrate(accepted(m, 1.0).kappa_star, &c).map_err(|e| e.to_string())?;
        check(t.event == TerminalEvent::ReachedYMax, || format!("m={m}: stopped with {:?}", t.event))?;
        let y0 = 1.0;
        let mut v = to_phase(&t.state_at(y0).unwrap(), m).unwrap().vector();
        let mut xi = y0.ln();
        let mut worst = 0.0f64;
        let inside: Vec<&Sample> = t.samples.iter().filter(|s| s.state.y > y0 && s.state.y <= 10.0 * y0).collect();
        for s in &inside {
            let target = s.state.y.ln();
            let n = ((target - xi) / 2e-4).ceil().max(1.0) as usize;
            for _ in 0..n {
                v = phase_step(m, c.alpha, v, (target - xi) / n as f64);
            }
            xi = target;
            let p = to_phase(&s.state, m).unwrap().vector();
            let scale = p.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            worst = worst.max((0..4).fold(0.0f64, |a, i| a.max((p[i] - v[i]).abs())) / scale);
        }
        check(inside.len() > 10, || format!("m={m}: only {} samples in the decade", inside.len()))?;
        check(worst <= 1e-6, || format!("m={m}: deviation {worst:e}"))?;
        parts.push(format!("m={m} {worst:.1e}"));
    }
    Ok(format!("largest relative deviation {}", parts.join(", ")))
}

/// Largest scaled residual of the correction equation with `P_yyyy` from differences of `P_yyy`.
fn difference_residual(base: &Trajectory, s: &CorrectionSolution) -> f64 {
    let (m, alpha) = (base.cfg.m, base.cfg.alpha);
    let mut worst = 0.0f64;
    for w in s.samples.windows(3) {
        let (l, c, r) = (&w[0], &w[1], &w[2]);
        if r.y - l.y < 1e-3 {
            continue;
        }
        let (h1, h2) = (c.y - l.y, r.y - c.y);
        let p4 = (h1 * h1 * (r.pyyy - c.pyyy) + h2 * h2 * (c.pyyy - l.pyyy)) / (h1 * h2 * (h1 + h2));
        let f0 = base.state_at(c.y).unwrap();
        let (f, fy, f3) = (f0.f, f0.fy, f0.fyyy);
        let f4 = lifting::model::rhs_physical(&f0, &base.cfg).unwrap().fyyyy;
        let terms = [
            2.0 * alpha * c.p,
            -alpha * c.y * c.py,
            m * f.powf(m - 1.0) * fy * c.pyyy,
            f.powf(m) * p4,
            m * (m - 1.0) * f.powf(m - 2.0) * fy * f3 * c.p,
            m * f.powf(m - 1.0) * f4 * c.p,
            m * f.powf(m - 1.0) * f3 * c.py,
        ];
        let norm: f64 = terms.iter().map(|x| x.abs()).sum();
        if norm > 0.0 {
            worst = worst.max(terms.iter().sum::<f64>().abs() / norm);
        }
    }
    worst
}

fn merging() -> Outcome {
    let r = accepted(2.0, 1.0);
    let solve = |b: f64, y_match: Option<f64>| {
        solve_correction(&CorrectionProblem { base: &r.trajectory, b_drop: b, y_match }, r.a).map_err(|e| format!("b={b}: {e}"))
    };
    let zero = solve(0.0, None)?;
    check(zero.samples.iter().all(|s| [s.p, s.py, s.pyy, s.pyyy] == [0.0; 4]), || "b=0 gave P ≠ 0".into())?;
    let mut worst_fd = 0.0f64;
    let mut residuals = Vec::new();
    for b in [0.5, 1.0] {
        let (one, two) = (solve(b, None)?, solve(2.0 * b, None)?);
        for (x, y) in one.samples.iter().zip(&two.samples) {
            check((2.0 * x.p - y.p).abs() <= 1e-10 * y.p.abs(), || format!("b={b}: P(2b) ≠ 2P(b) at y={}", x.y))?;
        }
        check(one.residual <= 1e-3, || format!("b={b}: matching residual {:e}", one.residual))?;
        let wider = solve(b, Some(2.0 * one.y_match))?;
        check(wider.residual <= one.residual, || format!("b={b}: residual grew from {:e} to {:e}", one.residual, wider.residual))?;
        worst_fd = worst_fd.max(difference_residual(&r.trajectory, &one));
        residuals.push(one.residual);
    }
    check(worst_fd <= 1e-4, || format!("finite-difference residual {worst_fd:e}"))?;
    // the matched solution is itself a solution of the shooting problem from the axis
    let s = solve(1.0, None)?;
    let direct = integrate_correction(&r.trajectory, s.p0, s.pyy0, s.y_match).map_err(|e| e.to_string())?;
    let end = direct.last().unwrap();
    let p = s.p_at(s.y_match).unwrap();
    check((end.p - p).abs() <= 1e-8 * p.abs(), || format!("re-integration {} vs {p}", end.p))?;
    Ok(format!("matching residuals {:.1e}, {:.1e}; difference residual {worst_fd:.1e}", residuals[0], residuals[1]))
}

fn figure() -> Outcome {
    let dir = std::env::temp_dir().join(format!("lifting-acceptance-{}", std::process::id()));
    let out = Command::new(env!("CARGO_BIN_EXE_lifting"))
        .args(["evolve", "--m", "2", "--times", "0.01:1.01:0.2", "--out"])
        .arg(&dir)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let result = figure_checks(&dir);
    let _ = std::fs::remove_dir_all(&dir);
    result
}

fn figure_checks(dir: &Path) -> Outcome {
    let text = std::fs::read_to_string(dir.join("evolution.csv")).map_err(|e| e.to_string())?;
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("evolution.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let a = doc["a"].as_f64().ok_or("no slope in evolution.json")?;
    let mut snaps: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        match snaps.last_mut() {
            Some((t, rows)) if *t == v[0] => rows.push((v[1], v[2])),
            _ => snaps.push((v[0], vec![(v[1], v[2])])),
        }
    }
    check(snaps.len() == 6, || format!("{} snapshots", snaps.len()))?;
    let mut centre = Vec::new();
    let mut wing = 0.0f64;
    for (t, rows) in &snaps {
        let h0 = rows.iter().find(|(x, _)| *x == 0.0).ok_or("no x = 0 column")?.1;
        check((h0 - t.sqrt()).abs() <= 1e-6 * t.sqrt(), || format!("t={t}: h(0) = {h0}"))?;
        centre.push(h0);
        // relative distance to the cone at the outermost point
        let (x, h) = *rows.iter().max_by(|p, q| p.0.total_cmp(&q.0)).unwrap();
        let gap = (h - a * x.abs()).abs() / (a * x.abs());
        if *t == snaps[0].0 {
            wing = gap;
        }
    }
    check(centre.windows(2).all(|w| w[1] > w[0]), || format!("h(0, t) not increasing: {centre:?}"))?;
    // the earliest snapshot sees y = |x|/√t out to 50, deep in the far field
    check(wing <= 1e-4, || format!("wing at t=0.01 off the cone by {wing:e}"))?;
    Ok(format!("6 snapshots, h(0,t)=√t, wing gap {wing:.1e} at t=0.01"))
}

fn main() {
    let items: [Item; 10] = [
        ("bracket", bracket),
        ("region persistence", persistence),
        ("energy monotonicity", energy),
        ("far field", far_field),
        ("asymptotic rate", rate),
        ("m=4 spectrum", spectrum),
        ("dissipation", dissipation),
        ("phase oracle", oracle),
        ("merging correction", merging),
        ("evolution snapshots", figure),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, item) in items {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(item)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or("panic".into()))
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > ITEM_BUDGET => Err(format!("took {:.1}s", took.as_secs_f64())),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({:.1}s)", took.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} ({:.1}s)", took.as_secs_f64());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
