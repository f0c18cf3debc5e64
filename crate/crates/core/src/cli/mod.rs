//! Command-line front end: argument parsing, orchestration and file output.

pub mod diagnose;
pub mod io;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{evolution_snapshots, integrate_with, seed_check, IntegrateOptions, SeedCheck};
use crate::merging::{solve_correction, CorrectionProblem};
use crate::model::ProblemConfig;
use crate::shooting::{k0_theory, shoot_with, slope_estimate, ShootOptions, ShootingResult, DEFAULT_KAPPA_TOL};
use crate::spectral::{characteristic_roots, tail_expansion_check, Root, SpectralResult, TailReport};
use crate::Trajectory;
use io::{SCHEMA_VERSION, write_json};

#[derive(Debug, Parser)]
#[command(name = "lifting", version, about = "Self-similar lifting profiles of h_t + (h^m h_xxx)_x = 0")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bisect on kappa and write the accepted profile.
    Shoot(Common),
    /// Integrate one kappa and classify it.
    Profile(ProfileArgs),
    /// Write h(x, t) snapshots rebuilt from the accepted profile.
    Evolve(EvolveArgs),
    /// Roots of the m = 4 far-field polynomial.
    Spectrum(SpectrumArgs),
    /// First-order correction for two merging droplets.
    Merge(MergeArgs),
    /// Re-validate a trajectory file.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    #[arg(long, allow_hyphen_values = true)]
    pub m: f64,
    /// Exponential rate, required when m = 4.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long = "kappa-tol", default_value_t = DEFAULT_KAPPA_TOL)]
    pub kappa_tol: f64,
    /// Defaults to a radius chosen from m.
    #[arg(long, allow_hyphen_values = true)]
    pub ymax: Option<f64>,
    #[arg(long, default_value_t = ProblemConfig::DEFAULT_Y_START, allow_hyphen_values = true)]
    pub ystart: f64,
    #[arg(long, default_value_t = ProblemConfig::DEFAULT_RTOL)]
    pub rtol: f64,
    #[arg(long, default_value_t = ProblemConfig::DEFAULT_ATOL)]
    pub atol: f64,
    #[arg(long, default_value_t = ProblemConfig::DEFAULT_F_MIN)]
    pub fmin: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Report the series seed against the ODE at y_start.
    #[arg(long = "seed-check")]
    pub seed_check: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: f64,
}

#[derive(Debug, Clone, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// start:stop:step, stop included.
    #[arg(long, default_value = "0.01:1.01:0.2")]
    pub times: String,
    /// start:stop:n.
    #[arg(long, default_value = "-5:5:201", allow_hyphen_values = true)]
    pub xgrid: String,
    /// Accepted profile CSV; shoots when absent.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: Common,
    /// Far-field slope; taken from the profile when absent.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MergeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "b-drop", default_value_t = 1.0, allow_hyphen_values = true)]
    pub b_drop: f64,
    #[arg(long = "y-match")]
    pub y_match: Option<f64>,
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub trajectory: PathBuf,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Shoot(c) => c,
            Command::Profile(a) => &a.common,
            Command::Evolve(a) => &a.common,
            Command::Spectrum(a) => &a.common,
            Command::Merge(a) => &a.common,
            Command::Diagnose(a) => &a.common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Shoot(_) => "shoot",
            Command::Profile(_) => "profile",
            Command::Evolve(_) => "evolve",
            Command::Spectrum(_) => "spectrum",
            Command::Merge(_) => "merge",
            Command::Diagnose(_) => "diagnose",
        }
    }
}

impl Common {
    pub fn config(&self) -> Result<ProblemConfig> {
        let cfg = ProblemConfig::new(self.m, self.b)?
            .with_tolerances(self.rtol, self.atol)
            .with_y_start(self.ystart)
            .with_f_min(self.fmin)
            .with_y_max(self.ymax.unwrap_or_else(|| ProblemConfig::suggested_y_max(self.m)));
        cfg.validate()?;
        if !(self.kappa_tol.is_finite() && self.kappa_tol > 0.0) {
            return Err(Error::Config(format!("kappa-tol = {} must be positive", self.kappa_tol)));
        }
        Ok(cfg)
    }
}

/// `start:stop:step` with the stop value included when it lies on the grid.
pub fn parse_times(arg: &str) -> Result<Vec<f64>> {
    let parts = parse_triple(arg, "--times")?;
    let (start, stop, step) = (parts[0], parts[1], parts[2]);
    if !(step > 0.0) || stop < start {
        return Err(Error::Config(format!("--times {arg}: need step > 0 and stop >= start")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

/// `start:stop:n` with `n ≥ 2` evenly spaced points.
pub fn parse_grid(arg: &str) -> Result<Vec<f64>> {
    let parts = parse_triple(arg, "--xgrid")?;
    let (start, stop, n) = (parts[0], parts[1], parts[2]);
    if n.fract() != 0.0 || n < 2.0 || !(stop > start) {
        return Err(Error::Config(format!("--xgrid {arg}: need an integer n >= 2 and stop > start")));
    }
    let n = n as usize;
    Ok((0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect())
}

fn parse_triple(arg: &str, flag: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = arg
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("{flag} {arg}: expected three numbers separated by ':'")))?;
    match v[..] {
        [a, b, c] if v.iter().all(|x| x.is_finite()) => Ok([a, b, c]),
        _ => Err(Error::Config(format!("{flag} {arg}: expected three numbers separated by ':'"))),
    }
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    problem: ProblemConfig,
    kappa_tol: f64,
    out: String,
    seed_check: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    xgrid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b_drop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_match: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectory: Option<String>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    schema_version: u32,
    subcommand: &'static str,
    version: &'static str,
    config: ResolvedConfig,
    duration_seconds: f64,
    outputs: Vec<String>,
}

/// Result document shared by `shoot`, `evolve`, `spectrum` and `merge`.
#[derive(Debug, Default, Serialize)]
pub struct ResultDoc {
    pub schema_version: u32,
    pub m: f64,
    pub b: Option<f64>,
    pub alpha: f64,
    pub kappa_lo: Option<f64>,
    pub kappa_hi: Option<f64>,
    pub kappa_star: Option<f64>,
    pub a: Option<f64>,
    pub dissipation: Option<f64>,
    pub dissipation_tail: Option<f64>,
    #[serde(rename = "K0_theory")]
    pub k0_theory: Option<f64>,
    #[serde(rename = "K0_fitted")]
    pub k0_fitted: Option<f64>,
    pub iterations: Option<usize>,
    pub terminal_event: Option<&'static str>,
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roots: Option<[Root; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z0: Option<Root>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_check: Option<TailReport>,
    pub details: serde_json::Value,
}

impl ResultDoc {
    fn base(cfg: &ProblemConfig) -> Self {
        ResultDoc {
            schema_version: SCHEMA_VERSION,
            m: cfg.m,
            b: cfg.b,
            alpha: cfg.alpha,
            details: serde_json::Value::Null,
            ..Default::default()
        }
    }

    pub fn from_shoot(cfg: &ProblemConfig, r: &ShootingResult, seed: Option<SeedCheck>) -> Self {
        let mut doc = Self::base(cfg);
        doc.kappa_lo = Some(r.kappa_lo);
        doc.kappa_hi = Some(r.kappa_hi);
        doc.kappa_star = Some(r.kappa_star);
        doc.a = Some(r.a);
        doc.dissipation = Some(r.dissipation.value);
        doc.dissipation_tail = Some(r.dissipation.tail);
        doc.k0_theory = (cfg.m < 4.0).then(|| k0_theory(cfg.m, r.a));
        doc.k0_fitted = r.rate_fit.as_ref().map(|f| f.k0_fitted);
        doc.iterations = Some(r.iterations);
        doc.terminal_event = Some(r.trajectory.event.name());
        doc.flags = r.flags.clone();
        doc.details = serde_json::json!({
            "slope": r.slope,
            "dissipation": r.dissipation,
            "rate_fit": r.rate_fit,
            "initial_bracket": r.initial_bracket,
            "y_trust": r.y_trust,
            "y_max_decide": r.y_max_decide,
            "continued_from": r.trajectory.continued_from,
            "probes": r.history,
            "seed_check": seed,
        });
        doc
    }

    fn with_spectrum(mut self, s: &SpectralResult, tail: Option<TailReport>) -> Self {
        self.a = Some(s.a);
        self.roots = Some(s.roots);
        self.z0 = Some(s.z0);
        self.lambda0 = Some(s.lambda0);
        self.omega0 = Some(s.omega0);
        self.tail_check = tail;
        self
    }
}

#[derive(Debug, Serialize)]
struct ErrorDoc<'a> {
    schema_version: u32,
    kind: &'static str,
    message: String,
    exit_code: i32,
    subcommand: &'a str,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() { 2 } else { 1 }
}

/// Parses `argv` (including the program name), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let started = Instant::now();
    let out = cli.command.common().out.clone();
    match execute(&cli.command, started) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e}");
            let doc = ErrorDoc {
                schema_version: SCHEMA_VERSION,
                kind: e.kind(),
                message: e.to_string(),
                exit_code: code,
                subcommand: cli.command.name(),
            };
            if std::fs::create_dir_all(&out).is_ok() {
                let _ = write_json(&out.join("error.json"), &doc);
            }
            code
        }
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }
}

fn shoot_profile(cfg: &ProblemConfig, common: &Common) -> Result<ShootingResult> {
    shoot_with(cfg, &ShootOptions { kappa_tol: common.kappa_tol, ..Default::default() })
}

fn load_or_shoot(
    path: Option<&PathBuf>,
    cfg: &ProblemConfig,
    common: &Common,
) -> Result<(Trajectory, ResultDoc)> {
    match path {
        Some(p) => {
            let traj = io::read_trajectory(p, cfg, None)?;
            let mut doc = ResultDoc::base(cfg);
            doc.a = Some(slope_estimate(&traj)?.a);
            doc.kappa_star = Some(traj.kappa);
            Ok((traj, doc))
        }
        None => {
            let r = shoot_profile(cfg, common)?;
            let doc = ResultDoc::from_shoot(cfg, &r, None);
            Ok((r.trajectory, doc))
        }
    }
}

fn execute(cmd: &Command, started: Instant) -> Result<()> {
    let common = cmd.common();
    let cfg = common.config()?;
    let mut out = Outputs::new(&common.out)?;
    let mut resolved = ResolvedConfig {
        problem: cfg,
        kappa_tol: common.kappa_tol,
        out: common.out.display().to_string(),
        seed_check: common.seed_check,
        kappa: None,
        times: None,
        xgrid: None,
        a: None,
        b_drop: None,
        y_match: None,
        trajectory: None,
    };
    match cmd {
        Command::Shoot(_) => {
            let r = shoot_profile(&cfg, common)?;
            let seed = common.seed_check.then(|| seed_check(r.kappa_star, &cfg));
            write_json(&out.path("result.json"), &ResultDoc::from_shoot(&cfg, &r, seed))?;
            io::write_trajectory(&out.path("trajectory.csv"), &r.trajectory)?;
        }
        Command::Profile(args) => {
            resolved.kappa = Some(args.kappa);
            let traj = integrate_with(args.kappa, &cfg, &IntegrateOptions::default())?;
            io::write_trajectory(&out.path("profile.csv"), &traj)?;
            let doc = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "m": cfg.m,
                "b": cfg.b,
                "alpha": cfg.alpha,
                "kappa": args.kappa,
                "terminal_event": traj.event.name(),
                "verdict": traj.verdict(),
                "y_end": traj.y_end,
                "entry": traj.entry,
                "samples": traj.samples.len(),
                "seed_check": common.seed_check.then(|| seed_check(args.kappa, &cfg)),
            });
            write_json(&out.path("profile.json"), &doc)?;
        }
        Command::Evolve(args) => {
            let times = parse_times(&args.times)?;
            let x = parse_grid(&args.xgrid)?;
            resolved.times = Some(times.clone());
            resolved.xgrid = Some(args.xgrid.clone());
            resolved.trajectory = args.trajectory.as_ref().map(|p| p.display().to_string());
            let (traj, mut doc) = load_or_shoot(args.trajectory.as_ref(), &cfg, common)?;
            let snaps = evolution_snapshots(&traj, &cfg, &times, &x)?;
            io::write_evolution(&out.path("evolution.csv"), &snaps.times, &snaps.x, &snaps.h)?;
            let centre: Vec<f64> = times
                .iter()
                .map(|&t| traj.height_at(0.0).unwrap_or(f64::NAN) * if cfg.m == 4.0 { (cfg.alpha * t).exp() } else { t.powf(cfg.alpha) })
                .collect();
            doc.details = serde_json::json!({ "times": times, "h_center": centre, "x_points": x.len() });
            write_json(&out.path("evolution.json"), &doc)?;
        }
        Command::Spectrum(args) => {
            if cfg.m != 4.0 {
                return Err(Error::Config("spectrum applies to m = 4 only".into()));
            }
            let b = cfg.b.expect("validated");
            resolved.a = args.a;
            resolved.trajectory = args.trajectory.as_ref().map(|p| p.display().to_string());
            let (doc, roots, tail) = match (args.a, &args.trajectory) {
                (Some(a), None) => {
                    let roots = characteristic_roots(a, b)?;
                    (ResultDoc::base(&cfg), roots, None)
                }
                (a, path) => {
                    let (traj, doc) = load_or_shoot(path.as_ref(), &cfg, common)?;
                    let a = a.or(doc.a).expect("slope available");
                    let roots = characteristic_roots(a, b)?;
                    let tail = tail_expansion_check(&traj, &roots)?;
                    (doc, roots, Some(tail))
                }
            };
            write_json(&out.path("spectrum.json"), &doc.with_spectrum(&roots, tail))?;
        }
        Command::Merge(args) => {
            if cfg.m >= 4.0 {
                return Err(Error::Config("merge applies to m < 4 only".into()));
            }
            resolved.b_drop = Some(args.b_drop);
            resolved.y_match = args.y_match;
            resolved.trajectory = args.trajectory.as_ref().map(|p| p.display().to_string());
            let (traj, mut doc) = load_or_shoot(args.trajectory.as_ref(), &cfg, common)?;
            let a = doc.a.expect("slope available");
            let problem = CorrectionProblem { base: &traj, b_drop: args.b_drop, y_match: args.y_match };
            let sol = solve_correction(&problem, a)?;
            io::write_correction(&out.path("correction.csv"), &sol.samples)?;
            doc.details = serde_json::json!({
                "b_drop": sol.b_drop,
                "y_match": sol.y_match,
                "p0": sol.p0,
                "pyy0": sol.pyy0,
                "window": sol.window,
                "residual": sol.residual,
                "window_residual": sol.window_residual,
                "condition": sol.condition,
                "null_drift": sol.null_drift,
            });
            write_json(&out.path("merge.json"), &doc)?;
        }
        Command::Diagnose(args) => {
            resolved.trajectory = Some(args.trajectory.display().to_string());
            let rows = io::read_trajectory_rows(&args.trajectory)?;
            let report = diagnose::diagnose(&rows, &cfg);
            let doc = serde_json::json!({
                "schema_version": SCHEMA_VERSION,
                "file": args.trajectory.display().to_string(),
                "report": report,
            });
            write_json(&out.path("diagnose.json"), &doc)?;
            if !report.pass {
                let failed = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.to_string()).collect();
                write_manifest(&out, cmd.name(), resolved, started)?;
                return Err(Error::ChecksFailed(failed));
            }
        }
    }
    write_manifest(&out, cmd.name(), resolved, started)
}

fn write_manifest(out: &Outputs, name: &'static str, config: ResolvedConfig, started: Instant) -> Result<()> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        subcommand: name,
        version: env!("CARGO_PKG_VERSION"),
        config,
        duration_seconds: started.elapsed().as_secs_f64(),
        outputs: out.files.clone(),
    };
    write_json(&out.dir.join(format!("{name}.manifest.json")), &manifest)
}
