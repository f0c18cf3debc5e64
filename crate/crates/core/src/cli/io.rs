//! CSV and JSON formats of the command-line tool.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{Sample, TerminalEvent, Trajectory};
use crate::merging::CorrectionSample;
use crate::model::{diagnostics, to_phase, ProblemConfig, ProfileState};

pub const SCHEMA_VERSION: u32 = 1;
pub const TRAJECTORY_HEADER: [&str; 11] = ["y", "f", "fy", "fyy", "fyyy", "phi", "W", "Q", "Z", "E1", "E2"];
pub const EVOLUTION_HEADER: [&str; 3] = ["t", "x", "h"];
pub const CORRECTION_HEADER: [&str; 5] = ["y", "P", "Py", "Pyy", "Pyyy"];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.filter(|v| v.is_finite()).map(fmt).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Phase columns of a sample; `Φ` is absent at the origin.
fn phase_columns(s: &Sample, m: f64) -> (Option<f64>, [f64; 3]) {
    let st = &s.state;
    if st.y == 0.0 {
        return (None, [0.0; 3]);
    }
    match to_phase(st, m) {
        Ok(p) => {
            let wqz = match s.deviation {
                Some(d) => [1.0 + d[0], d[1], d[2]],
                None => [p.w, p.q, p.z],
            };
            (Some(p.phi), wqz)
        }
        Err(_) => (None, [f64::NAN; 3]),
    }
}

pub fn trajectory_row(s: &Sample, m: f64) -> Vec<String> {
    let st = &s.state;
    let (phi, [w, q, z]) = phase_columns(s, m);
    vec![
        fmt(st.y),
        fmt(st.f),
        fmt(st.fy),
        fmt(st.fyy),
        fmt(st.fyyy),
        opt(phi),
        fmt(w),
        fmt(q),
        fmt(z),
        fmt(s.diag.e1),
        opt(Some(s.diag.e2)),
    ]
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TRAJECTORY_HEADER).map_err(csv_err)?;
    for s in &traj.samples {
        w.write_record(trajectory_row(s, traj.cfg.m)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One parsed trajectory row. Empty fields become `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub state: ProfileState,
    pub phi: Option<f64>,
    pub w: Option<f64>,
    pub q: Option<f64>,
    pub z: Option<f64>,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
}

fn field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<Option<f64>> {
    let raw = rec.get(i).unwrap_or("").trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse(format!("line {line}: column {} is not a number: {raw:?}", TRAJECTORY_HEADER[i])))
}

pub fn read_trajectory_rows(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    let index: Vec<usize> = TRAJECTORY_HEADER
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h.trim() == *name)
                .ok_or_else(|| Error::Parse(format!("missing column {name}")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = n + 2;
        let get = |k: usize| field(&rec, index[k], line);
        let need = |k: usize| {
            get(k)?.ok_or_else(|| Error::Parse(format!("line {line}: empty {}", TRAJECTORY_HEADER[k])))
        };
        rows.push(TrajectoryRow {
            state: ProfileState::new(need(0)?, need(1)?, need(2)?, need(3)?, need(4)?),
            phi: get(5)?,
            w: get(6)?,
            q: get(7)?,
            z: get(8)?,
            e1: get(9)?,
            e2: get(10)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{} has no data rows", path.display())));
    }
    Ok(rows)
}

/// Rebuilds a trajectory from a CSV written by `shoot` or `profile`.
pub fn read_trajectory(path: &Path, cfg: &ProblemConfig, kappa: Option<f64>) -> Result<Trajectory> {
    let rows = read_trajectory_rows(path)?;
    let samples: Vec<Sample> = rows.iter().map(|r| Sample::new(r.state, cfg)).collect();
    if samples.windows(2).any(|w| !(w[1].state.y > w[0].state.y)) {
        return Err(Error::Parse("y column must be strictly increasing".into()));
    }
    let y_end = samples.last().map_or(0.0, |s| s.state.y);
    let mut cfg = *cfg;
    if y_end > cfg.y_start {
        cfg.y_max = y_end;
    }
    Ok(Trajectory {
        kappa: kappa.unwrap_or(samples[0].state.fyy),
        cfg,
        samples,
        event: TerminalEvent::ReachedYMax,
        y_end,
        entry: None,
        continued_from: None,
        accepted_steps: 0,
        rejected_steps: 0,
    })
}

pub fn write_evolution(path: &Path, times: &[f64], x: &[f64], h: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(EVOLUTION_HEADER).map_err(csv_err)?;
    for (t, row) in times.iter().zip(h) {
        for (xv, hv) in x.iter().zip(row) {
            w.write_record([fmt(*t), fmt(*xv), fmt(*hv)]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_correction(path: &Path, samples: &[CorrectionSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CORRECTION_HEADER).map_err(csv_err)?;
    for s in samples {
        w.write_record([fmt(s.y), fmt(s.p), fmt(s.py), fmt(s.pyy), fmt(s.pyyy)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

/// Recomputes the energy columns of a row from its state.
pub fn expected_energies(row: &TrajectoryRow, cfg: &ProblemConfig) -> (f64, Option<f64>) {
    let d = diagnostics(&row.state, cfg);
    (d.e1, d.e2.is_finite().then_some(d.e2))
}
