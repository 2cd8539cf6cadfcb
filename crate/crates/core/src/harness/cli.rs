//! `fluidosc` subcommands. Every entry point returns the process exit code:
//! 0 success, 1 usage/config/parse error, 2 run or check failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::diagnostics::{
    energy_audit_rows, entropy_monitor, momentum_law, test_family, weak_continuity_residual,
    weak_momentum_residual, TimeRule, WeakOptions,
};
use crate::error::{Error, Result};
use crate::harness::config::{RunConfig, SweepConfig};
use crate::harness::trajfile::{self, TrajectoryFile};
use crate::integrator::{energy_tolerance, Simulator, Trajectory, TrajectoryRecord};
use crate::model::{EnergyLedgerRow, ForcingSignal};
use crate::rigid::{rigid_ode, Particular, RigidParams};
use crate::sweep::{metrics_csv, metrics_for, run_sweep_to};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

/// Weak-form residual bound for `verify`.
pub const WEAK_TOL: f64 = 1e-4;
/// Bound on the positive part of the entropy balance defect.
pub const ENTROPY_TOL: f64 = 1e-8;
/// Per-step mass drift allowance, relative to the initial mass.
pub const MASS_TOL_PER_STEP: f64 = 1e-12;
/// Bound on the new-level momentum balance, relative to `1 + max |P|`.
pub const MOMENTUM_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "fluidosc", version, about = "Viscous compressible fluid in a spring-mounted container")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one configuration and write its trajectory file.
    Simulate(SimulateArgs),
    /// Closed-form and RK4 rigid oscillator.
    Rigid(RigidArgs),
    /// Re-check a trajectory file.
    Verify(VerifyArgs),
    /// Run a parameter grid and write a metrics table.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML config file.
    pub config: Option<PathBuf>,
    /// Start from a built-in configuration instead of a file.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Trajectory path; defaults to `run.output`, then stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write full density and mode snapshots here.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    /// Also write a one-row metrics table here.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct RigidArgs {
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
    /// Anchor amplitude; zero means no forcing.
    #[arg(long, default_value_t = 0.0)]
    pub amplitude: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.0)]
    pub phase: f64,
    #[arg(long, default_value_t = 0.0)]
    pub b0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub bdot0: f64,
    /// Homogeneous cosine coefficient; overrides `--b0`.
    #[arg(long)]
    pub c1: Option<f64>,
    /// Homogeneous sine coefficient; overrides `--bdot0`.
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long, default_value_t = 20.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Keep every n-th step.
    #[arg(long, default_value_t = 10)]
    pub every: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub trajectory: PathBuf,
    /// Snapshot companion file; without it the run is repeated from the header.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    /// Write the report as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub config: PathBuf,
    /// Metrics table path; defaults to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for one trajectory file per grid point.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses `args` (including the program name) and dispatches.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match cli.command {
        Command::Simulate(a) => simulate(&a, out, err),
        Command::Rigid(a) => rigid(&a, out, err),
        Command::Verify(a) => verify(&a, out, err),
        Command::Sweep(a) => sweep(&a, out, err),
    }
}

fn write_or_print(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn fail(err: &mut dyn Write, code: i32, e: impl std::fmt::Display) -> i32 {
    let _ = writeln!(err, "error: {e}");
    code
}

pub fn load_config(args: &SimulateArgs) -> Result<RunConfig> {
    let text = match (&args.config, &args.preset) {
        (Some(path), _) => std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?,
        (None, Some(name)) => RunConfig::preset(name)?.to_toml()?,
        (None, None) => return Err(Error::Config("give a config file or --preset".into())),
    };
    RunConfig::from_toml_with_overrides(&text, &args.overrides)
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let config = match load_config(args) {
        Ok(c) => c,
        Err(e) => return fail(err, EXIT_USAGE, e),
    };
    let traj = match Simulator::new(config.params.clone(), config.forcing.clone())
        .and_then(|sim| sim.run(&config.initial_state()?, config.run.t_end, config.run.output_every))
    {
        Ok(t) => t,
        Err(e) => return fail(err, EXIT_USAGE, e),
    };
    let target = args.out.clone().or_else(|| config.run.output.clone().map(PathBuf::from));
    let written = trajfile::render(&config, &traj).and_then(|text| write_or_print(target.as_deref(), &text, out));
    if let Err(e) = written {
        return fail(err, EXIT_FAILURE, e);
    }
    if let Some(path) = &args.snapshots {
        if let Err(e) = std::fs::write(path, trajfile::render_snapshots(&traj)) {
            return fail(err, EXIT_FAILURE, e);
        }
    }
    if let Some(path) = &args.metrics {
        let row = metrics_for(0, Vec::new(), &traj);
        if let Err(e) = std::fs::write(path, metrics_csv(&[row])) {
            return fail(err, EXIT_FAILURE, e);
        }
    }
    let m = &traj.monitors;
    let _ = writeln!(
        err,
        "steps={} rejected={} max_mass_drift={:.3e} energy_violations={} status={}",
        m.steps,
        m.rejected_attempts,
        m.max_mass_drift,
        m.energy_violations,
        trajfile::status_text(&traj.status)
    );
    if traj.status.is_completed() {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

pub fn rigid_params(args: &RigidArgs) -> Result<RigidParams> {
    let forcing = if args.amplitude == 0.0 {
        ForcingSignal::Zero
    } else {
        ForcingSignal::Sinusoid {
            amplitude: args.amplitude,
            omega: args.omega,
            phase: args.phase,
        }
    };
    let mut p = RigidParams {
        k_spring: args.k,
        mass: args.mass,
        forcing,
        b0: args.b0,
        bdot0: args.bdot0,
    };
    if args.c1.is_some() || args.c2.is_some() {
        // with zero initial data the homogeneous part cancels the particular one
        let zero = RigidParams {
            b0: 0.0,
            bdot0: 0.0,
            ..p.clone()
        }
        .closed_form()?;
        if let Some(c1) = args.c1 {
            p.b0 = c1 - zero.c1;
        }
        if let Some(c2) = args.c2 {
            p.bdot0 = (c2 - zero.c2) * zero.w;
        }
    }
    p.validate()?;
    Ok(p)
}

pub fn rigid(args: &RigidArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = (|| -> Result<String> {
        if !(args.dt > 0.0) || !(args.t_end > 0.0) || args.every == 0 {
            return Err(Error::Config("dt, t_end and every must be positive".into()));
        }
        let p = rigid_params(args)?;
        let cf = p.closed_form()?;
        let steady = match cf.particular {
            Particular::Steady { amplitude, .. } => amplitude,
            _ => f64::NAN,
        };
        let ode = rigid_ode(&p, args.t_end, args.dt)?;
        let mut text = String::from("t,b_closed,bdot_closed,b_ode,bdot_ode,diff,steady_amplitude\n");
        let last = ode.t.len() - 1;
        for i in (0..ode.t.len()).filter(|&i| i % args.every == 0 || i == last) {
            let (b, bd) = cf.eval(ode.t[i]);
            let _ = writeln!(
                text,
                "{:.16e},{b:.16e},{bd:.16e},{:.16e},{:.16e},{:.16e},{steady:.16e}",
                ode.t[i],
                ode.b[i],
                ode.bdot[i],
                (b - ode.b[i]).abs()
            );
        }
        Ok(text)
    })();
    match result.and_then(|text| write_or_print(args.out.as_deref(), &text, out)) {
        Ok(()) => EXIT_OK,
        Err(e) => fail(err, EXIT_USAGE, e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// `None` when the check could not be evaluated (reason in `note`).
    pub passed: Option<bool>,
    pub value: f64,
    pub tolerance: f64,
    pub note: String,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed: Some(passed),
            value,
            tolerance,
            note: String::new(),
        }
    }

    fn skipped(name: &str, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: None,
            value: f64::NAN,
            tolerance: f64::NAN,
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub file: String,
    pub build: String,
    pub status: String,
    pub rows: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Keeps the records a run with `every` would have stored.
fn subsample(full: &Trajectory, every: usize) -> Trajectory {
    let last = full.records.len() - 1;
    let records: Vec<TrajectoryRecord> = full
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| i % every == 0 || *i == last)
        .map(|(_, r)| r.clone())
        .collect();
    Trajectory {
        output_every: every,
        records,
        ..full.clone()
    }
}

fn body_after_build(text: &str) -> String {
    text.lines().skip(2).collect::<Vec<_>>().join("\n")
}

/// All checks for a parsed trajectory file whose raw text is `text`.
pub fn verify_file(file: &TrajectoryFile, text: &str, snapshots: Option<&str>) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    checks.push(Check {
        note: file.status.clone(),
        ..Check::new("run completed", 0.0, 0.0, file.completed())
    });

    let mass0 = file.rows[0].ledger.mass;
    let drift = file
        .rows
        .iter()
        .map(|r| (r.ledger.mass - mass0).abs())
        .fold(0.0, f64::max);
    let t_last = file.rows[file.rows.len() - 1].t;
    let n_steps = (t_last / file.config.params.dt).ceil().max(1.0);
    let mass_tol = n_steps * MASS_TOL_PER_STEP * mass0;
    checks.push(Check::new("mass conservation", drift, mass_tol, drift <= mass_tol));

    // full states: from the snapshot file, or by repeating the run
    let every = file.config.run.output_every;
    let full: Trajectory = match snapshots {
        Some(snap) => {
            let states = trajfile::parse_snapshots(snap)?;
            if states.len() != file.rows.len() {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("{} snapshots for {} rows", states.len(), file.rows.len()),
                });
            }
            let records = states
                .into_iter()
                .zip(&file.rows)
                .map(|(state, row)| TrajectoryRecord {
                    state,
                    ledger: row.ledger,
                    report: Default::default(),
                })
                .collect();
            Trajectory {
                params: file.config.params.clone(),
                forcing: file.config.forcing.clone(),
                output_every: every,
                records,
                status: crate::integrator::RunStatus::Completed,
                monitors: Default::default(),
            }
        }
        None => {
            let c = &file.config;
            let sim = Simulator::new(c.params.clone(), c.forcing.clone())?;
            let full = sim.run(&c.initial_state()?, c.run.t_end, 1)?;
            let again = trajfile::render(c, &subsample(&full, every))?;
            let same = body_after_build(&again) == body_after_build(text);
            checks.push(Check {
                note: "re-run from the header".into(),
                ..Check::new("bit-identical re-run", if same { 0.0 } else { 1.0 }, 0.0, same)
            });
            full
        }
    };

    // the per-step inequality only makes sense between consecutive steps
    if full.output_every == 1 {
        let rows: Vec<(f64, EnergyLedgerRow)> = full.records.iter().map(|r| (r.state.t, r.ledger)).collect();
        let audit = energy_audit_rows(&rows);
        checks.push(Check {
            note: format!("{} violations in {} steps", audit.violations, audit.defects.len()),
            ..Check::new(
                "energy inequality (per step)",
                audit.max_defect,
                energy_tolerance(audit.initial_energy),
                audit.violations == 0,
            )
        });
        checks.push(Check::new(
            "energy balance (cumulative)",
            audit.cumulative,
            audit.cumulative_tol,
            audit.cumulative <= audit.cumulative_tol,
        ));
    } else {
        for name in ["energy inequality (per step)", "energy balance (cumulative)"] {
            checks.push(Check::skipped(name, "states were not stored every step"));
        }
    }

    let skip = if full.output_every != 1 {
        Some("states were not stored every step")
    } else if full.records.len() < 2 {
        Some("no accepted steps")
    } else {
        None
    };
    if let Some(reason) = skip {
        for name in ["weak continuity residual", "weak momentum residual", "momentum law", "entropy balance"] {
            checks.push(Check::skipped(name, reason));
        }
        return Ok(checks);
    }

    let horizon = full.last().state.t;
    let family = test_family(full.params.length, horizon);
    let opts = WeakOptions::default();
    let mut cont: f64 = 0.0;
    let mut mom: f64 = 0.0;
    for phi in &family {
        cont = cont.max(weak_continuity_residual(&full, phi, TimeRule::Implicit)?.abs());
        mom = mom.max(weak_momentum_residual(&full, phi, &opts)?.abs());
    }
    checks.push(Check::new("weak continuity residual", cont, WEAK_TOL, cont <= WEAK_TOL));
    checks.push(Check::new("weak momentum residual", mom, WEAK_TOL, mom <= WEAK_TOL));

    let law = momentum_law(&full)?;
    let p_scale = 1.0
        + full
            .records
            .iter()
            .map(|r| r.ledger.total_momentum.abs())
            .fold(0.0, f64::max);
    let mtol = MOMENTUM_TOL * p_scale;
    checks.push(Check {
        note: format!("old-level C = {:.4e}, integrated = {:.4e}", law.c_max, law.integrated),
        ..Check::new("momentum law", law.max_implicit, mtol, law.max_implicit <= mtol)
    });

    let entropy = entropy_monitor(&full)?;
    let worst = entropy.defect.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::new("entropy balance", worst, ENTROPY_TOL, worst <= ENTROPY_TOL));
    Ok(checks)
}

pub fn verify(args: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match std::fs::read_to_string(&args.trajectory) {
        Ok(t) => t,
        Err(e) => return fail(err, EXIT_USAGE, format!("cannot read {}: {e}", args.trajectory.display())),
    };
    let file = match trajfile::parse(&text) {
        Ok(f) => f,
        Err(e) => return fail(err, EXIT_USAGE, e),
    };
    let snapshots = match &args.snapshots {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(s) => Some(s),
            Err(e) => return fail(err, EXIT_USAGE, format!("cannot read {}: {e}", p.display())),
        },
        None => None,
    };
    let checks = match verify_file(&file, &text, snapshots.as_deref()) {
        Ok(c) => c,
        Err(e @ Error::Parse { .. }) => return fail(err, EXIT_USAGE, e),
        Err(e) => return fail(err, EXIT_FAILURE, e),
    };
    let passed = checks.iter().all(|c| c.passed != Some(false));
    let report = VerifyReport {
        file: args.trajectory.display().to_string(),
        build: file.build.clone(),
        status: file.status.clone(),
        rows: file.rows.len(),
        checks,
        passed,
    };
    for c in &report.checks {
        let tag = match c.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        let _ = write!(out, "{tag} {}: {:.4e} (tol {:.4e})", c.name, c.value, c.tolerance);
        let _ = if c.note.is_empty() { writeln!(out) } else { writeln!(out, " {}", c.note) };
    }
    let _ = writeln!(out, "{}", if passed { "verify: ok" } else { "verify: FAILED" });
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = std::fs::write(path, json) {
            return fail(err, EXIT_FAILURE, e);
        }
    }
    if passed {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

pub fn sweep(args: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let config = match std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))
        .and_then(|t| SweepConfig::from_toml(&t))
    {
        Ok(c) => c,
        Err(e) => return fail(err, EXIT_USAGE, e),
    };
    if let Some(dir) = &args.out_dir {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return fail(err, EXIT_FAILURE, e);
        }
    }
    let rows = match run_sweep_to(&config, args.out_dir.as_deref()) {
        Ok(r) => r,
        Err(e) => return fail(err, EXIT_FAILURE, e),
    };
    if let Err(e) = write_or_print(args.out.as_deref(), &metrics_csv(&rows), out) {
        return fail(err, EXIT_FAILURE, e);
    }
    let failed = rows.iter().filter(|r| r.status != "completed").count();
    let _ = writeln!(err, "{} runs, {failed} failed", rows.len());
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}
