//! Re-validation of a trajectory file.

use serde::Serialize;

use super::io::{expected_energies, TrajectoryRow};
use crate::model::{classify, from_phase, to_phase, ProblemConfig, Region};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub violations: usize,
    /// Largest violation, in the units of the check.
    pub worst: f64,
    /// Radius of the first violation.
    pub first_y: Option<f64>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check { name, pass: true, violations: 0, worst: 0.0, first_y: None }
    }

    fn fail(&mut self, y: f64, amount: f64) {
        self.pass = false;
        self.violations += 1;
        self.worst = self.worst.max(amount);
        self.first_y.get_or_insert(y);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub rows: usize,
    pub pass: bool,
    pub checks: Vec<Check>,
}

const ENERGY_COLUMN_TOL: f64 = 1e-12;
const ROUND_TRIP_TOL: f64 = 1e-12;
const PHASE_COLUMN_TOL: f64 = 1e-10;

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 { 0.0 } else { (a - b).abs() / scale }
}

pub fn diagnose(rows: &[TrajectoryRow], cfg: &ProblemConfig) -> Report {
    let mut finite = Check::new("finite_rows");
    for r in rows {
        let origin = r.state.y == 0.0;
        let optional_ok = |v: Option<f64>, allowed_empty: bool| match v {
            Some(x) => x.is_finite(),
            None => allowed_empty,
        };
        let ok = r.state.is_finite()
            && optional_ok(r.phi, origin)
            && optional_ok(r.e2, origin)
            && optional_ok(r.w, false)
            && optional_ok(r.q, false)
            && optional_ok(r.z, false)
            && optional_ok(r.e1, false);
        if !ok {
            finite.fail(r.state.y, 1.0);
        }
    }

    let mut columns = Check::new("energy_columns");
    let energies: Vec<(f64, Option<f64>)> = rows.iter().map(|r| expected_energies(r, cfg)).collect();
    for (r, (e1, e2)) in rows.iter().zip(&energies) {
        let d1 = r.e1.map_or(f64::INFINITY, |v| (v - e1).abs() / (1.0 + e1.abs()));
        let d2 = match (r.e2, e2) {
            (Some(v), Some(e)) => (v - e).abs() / (1.0 + e.abs()),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        let d = d1.max(d2);
        if d > ENERGY_COLUMN_TOL {
            columns.fail(r.state.y, d);
        }
    }

    let mut e1_mono = Check::new("e1_non_decreasing");
    let mut e2_mono = Check::new("e2_non_decreasing");
    for (i, pair) in energies.windows(2).enumerate() {
        let y = rows[i + 1].state.y;
        let (a, b) = (pair[0].0, pair[1].0);
        let drop = a - b;
        if drop > cfg.rtol * (1.0 + a.abs()) {
            e1_mono.fail(y, drop);
        }
        if y > cfg.y_start && !(b > 0.0) {
            e1_mono.fail(y, -b);
        }
        if rows[i].state.y >= cfg.y_start {
            if let (Some(a), Some(b)) = (pair[0].1, pair[1].1) {
                let drop = a - b;
                if drop > cfg.rtol * (1.0 + a.abs()) {
                    e2_mono.fail(y, drop);
                }
            }
        }
    }

    let mut persist = Check::new("region_persistence");
    let mut entered: Option<Region> = None;
    for r in rows.iter().filter(|r| r.state.y > 0.0) {
        let tag = classify(&r.state, cfg);
        match (entered, tag.region) {
            (_, Region::Undecided) => {}
            (None, reg) => entered = Some(reg),
            (Some(e), reg) if e != reg => persist.fail(r.state.y, 1.0),
            _ => {}
        }
    }

    let mut round = Check::new("phase_round_trip");
    let mut phase_cols = Check::new("phase_columns");
    for r in rows.iter().filter(|r| r.state.y > 0.0 && r.state.f > 0.0) {
        let s = r.state;
        let Ok(p) = to_phase(&s, cfg.m) else {
            round.fail(s.y, f64::INFINITY);
            continue;
        };
        match from_phase(&p, cfg.m) {
            Ok(back) => {
                let d = [rel(back.y, s.y), rel(back.f, s.f), rel(back.fy, s.fy), rel(back.fyy, s.fyy), rel(back.fyyy, s.fyyy)]
                    .into_iter()
                    .fold(0.0, f64::max);
                if d > ROUND_TRIP_TOL {
                    round.fail(s.y, d);
                }
            }
            Err(_) => round.fail(s.y, f64::INFINITY),
        }
        let cmp = |col: Option<f64>, v: f64, abs: f64| {
            col.map_or(f64::INFINITY, |c| (c - v).abs() / (c.abs().max(v.abs()) + abs))
        };
        let d = [
            cmp(r.phi, p.phi, 0.0),
            cmp(r.w, p.w, 1.0),
            cmp(r.q, p.q, f64::MIN_POSITIVE),
            cmp(r.z, p.z, f64::MIN_POSITIVE),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        if d > PHASE_COLUMN_TOL {
            phase_cols.fail(s.y, d);
        }
    }

    let checks = vec![finite, columns, e1_mono, e2_mono, persist, round, phase_cols];
    Report { rows: rows.len(), pass: checks.iter().all(|c| c.pass), checks }
}
