//! Trajectory file: commented header with the config echo, CSV body, status
//! trailer. An optional companion file keeps full density and coefficient
//! snapshots at the same output times.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::integrator::{RunStatus, Trajectory, TrajectoryRecord};
use crate::model::{EnergyLedgerRow, FluidState};

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC: &str = "# fluidosc trajectory v";
pub const SNAPSHOT_MAGIC: &str = "# fluidosc snapshots v";

pub const COLUMNS: [&str; 17] = [
    "t",
    "b",
    "beta",
    "mass",
    "total_momentum",
    "kinetic",
    "pressure_potential",
    "artificial_potential",
    "spring",
    "dissipation_visc",
    "dissipation_eps",
    "power_in",
    "fp_iterations",
    "fp_residual",
    "newton_residual",
    "min_rho",
    "max_rho",
];

pub fn build_id() -> String {
    format!("fluidosc {}", env!("CARGO_PKG_VERSION"))
}

/// One parsed CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub b: f64,
    pub beta: f64,
    pub ledger: EnergyLedgerRow,
    pub fp_iterations: usize,
    pub fp_residual: f64,
    pub newton_residual: f64,
    pub min_rho: f64,
    pub max_rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub version: u32,
    pub build: String,
    pub config: RunConfig,
    pub rows: Vec<CsvRow>,
    /// `completed` or `failed: <cause>`.
    pub status: String,
}

impl TrajectoryFile {
    pub fn completed(&self) -> bool {
        self.status == "completed"
    }

    pub fn ledger_rows(&self) -> Vec<(f64, EnergyLedgerRow)> {
        self.rows.iter().map(|r| (r.t, r.ledger)).collect()
    }
}

/// `{:.16e}`: 17 significant digits, locale independent.
fn num(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

pub fn status_text(status: &RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".into(),
        RunStatus::Failed(msg) => format!("failed: {}", msg.replace('\n', " ")),
    }
}

pub fn render(config: &RunConfig, traj: &Trajectory) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}{FORMAT_VERSION}");
    let _ = writeln!(out, "# build: {}", build_id());
    out.push_str("# config-begin\n");
    for line in config.to_toml()?.lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("# config-end\n");
    out.push_str(&COLUMNS.join(","));
    out.push('\n');
    for rec in &traj.records {
        write_row(&mut out, rec);
    }
    let m = &traj.monitors;
    let _ = writeln!(
        out,
        "# monitors: steps={} rejected={} max_mass_drift={:.16e} energy_violations={} max_energy_defect={:.16e}",
        m.steps, m.rejected_attempts, m.max_mass_drift, m.energy_violations, m.max_energy_defect
    );
    let _ = writeln!(out, "# status: {}", status_text(&traj.status));
    Ok(out)
}

fn write_row(out: &mut String, rec: &TrajectoryRecord) {
    let s = &rec.state;
    let l = &rec.ledger;
    let r = &rec.report;
    let values = [
        s.t,
        s.b,
        s.beta,
        l.mass,
        l.total_momentum,
        l.kinetic,
        l.pressure_potential,
        l.artificial_potential,
        l.spring,
        l.dissipation_visc,
        l.dissipation_eps,
        l.power_in,
    ];
    for v in values {
        num(out, v);
        out.push(',');
    }
    let _ = write!(out, "{},", r.fp_iterations);
    for (i, v) in [r.fp_residual, r.newton_residual, s.min_rho(), s.max_rho()].into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        num(out, v);
    }
    out.push('\n');
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn parse(text: &str) -> Result<TrajectoryFile> {
    let lines: Vec<&str> = text.lines().collect();
    let line = |i: usize| lines.get(i).copied();

    let first = line(0).ok_or_else(|| parse_err(1, "empty file"))?;
    let version: u32 = first
        .strip_prefix(MAGIC)
        .ok_or_else(|| parse_err(1, "missing trajectory header"))?
        .trim()
        .parse()
        .map_err(|_| parse_err(1, "unreadable format version"))?;
    if version != FORMAT_VERSION {
        return Err(parse_err(
            1,
            format!("format version {version} is not supported (expected {FORMAT_VERSION})"),
        ));
    }
    let build = line(1)
        .and_then(|l| l.strip_prefix("# build: "))
        .ok_or_else(|| parse_err(2, "missing build line"))?
        .to_string();
    if line(2) != Some("# config-begin") {
        return Err(parse_err(3, "missing '# config-begin'"));
    }
    let mut idx = 3;
    let mut toml_text = String::new();
    loop {
        let l = line(idx).ok_or_else(|| parse_err(idx + 1, "unterminated config block"))?;
        if l == "# config-end" {
            break;
        }
        let body = l
            .strip_prefix("# ")
            .or_else(|| l.strip_prefix('#'))
            .ok_or_else(|| parse_err(idx + 1, "config line outside a comment"))?;
        toml_text.push_str(body);
        toml_text.push('\n');
        idx += 1;
    }
    let config = RunConfig::from_toml(&toml_text).map_err(|e| parse_err(idx + 1, format!("config echo: {e}")))?;
    idx += 1;

    let header = line(idx).ok_or_else(|| parse_err(idx + 1, "missing column header"))?;
    if header != COLUMNS.join(",") {
        return Err(parse_err(idx + 1, "unexpected column header"));
    }
    idx += 1;

    let mut rows = Vec::new();
    let mut status = None;
    while let Some(l) = line(idx) {
        let lineno = idx + 1;
        idx += 1;
        if let Some(rest) = l.strip_prefix("# status: ") {
            status = Some(rest.to_string());
            if idx < lines.len() {
                return Err(parse_err(idx + 1, "content after the status line"));
            }
            break;
        }
        if l.starts_with('#') {
            continue;
        }
        rows.push(parse_row(l, lineno)?);
    }
    let status = status.ok_or_else(|| parse_err(lines.len() + 1, "truncated file: missing status line"))?;
    if rows.is_empty() {
        return Err(parse_err(idx, "no data rows"));
    }
    Ok(TrajectoryFile {
        version,
        build,
        config,
        rows,
        status,
    })
}

fn parse_row(l: &str, lineno: usize) -> Result<CsvRow> {
    let fields: Vec<&str> = l.split(',').collect();
    if fields.len() != COLUMNS.len() {
        return Err(parse_err(
            lineno,
            format!("expected {} fields, found {}", COLUMNS.len(), fields.len()),
        ));
    }
    let f = |i: usize| -> Result<f64> {
        fields[i]
            .trim()
            .parse::<f64>()
            .map_err(|_| parse_err(lineno, format!("column '{}': cannot parse '{}'", COLUMNS[i], fields[i])))
    };
    let fp_iterations = fields[12]
        .trim()
        .parse::<usize>()
        .map_err(|_| parse_err(lineno, format!("column 'fp_iterations': cannot parse '{}'", fields[12])))?;
    Ok(CsvRow {
        t: f(0)?,
        b: f(1)?,
        beta: f(2)?,
        ledger: EnergyLedgerRow {
            t: f(0)?,
            mass: f(3)?,
            total_momentum: f(4)?,
            kinetic: f(5)?,
            pressure_potential: f(6)?,
            artificial_potential: f(7)?,
            spring: f(8)?,
            dissipation_visc: f(9)?,
            dissipation_eps: f(10)?,
            power_in: f(11)?,
        },
        fp_iterations,
        fp_residual: f(13)?,
        newton_residual: f(14)?,
        min_rho: f(15)?,
        max_rho: f(16)?,
    })
}

/// Companion file: one line per output time with `t, b, beta, rho.., v_coeffs..`.
pub fn render_snapshots(traj: &Trajectory) -> String {
    let p = &traj.params;
    let mut out = String::new();
    let _ = writeln!(out, "{SNAPSHOT_MAGIC}{FORMAT_VERSION}");
    let _ = writeln!(out, "# n_cells={} n_modes={}", p.n_cells, p.n_modes);
    for rec in &traj.records {
        let s = &rec.state;
        num(&mut out, s.t);
        for v in [s.b, s.beta].iter().chain(&s.rho).chain(&s.v_coeffs) {
            out.push(',');
            num(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

pub fn parse_snapshots(text: &str) -> Result<Vec<FluidState>> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty snapshot file"))?;
    if first != format!("{SNAPSHOT_MAGIC}{FORMAT_VERSION}") {
        return Err(parse_err(1, "missing or unsupported snapshot header"));
    }
    let (_, sizes) = lines.next().ok_or_else(|| parse_err(2, "missing size line"))?;
    let mut n_cells = None;
    let mut n_modes = None;
    for item in sizes.trim_start_matches('#').split_whitespace() {
        match item.split_once('=') {
            Some(("n_cells", v)) => n_cells = v.parse::<usize>().ok(),
            Some(("n_modes", v)) => n_modes = v.parse::<usize>().ok(),
            _ => {}
        }
    }
    let (n_cells, n_modes) = n_cells.zip(n_modes).ok_or_else(|| parse_err(2, "unreadable size line"))?;
    let width = 3 + n_cells + n_modes;
    let mut states = Vec::new();
    for (i, l) in lines {
        let lineno = i + 1;
        let values = l
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| parse_err(lineno, "unparsable number"))?;
        if values.len() != width {
            return Err(parse_err(lineno, format!("expected {width} fields, found {}", values.len())));
        }
        let rho = values[3..3 + n_cells].to_vec();
        let v = values[3 + n_cells..].to_vec();
        states.push(
            FluidState::new(values[0], rho, v, values[1], values[2]).map_err(|e| parse_err(lineno, e.to_string()))?,
        );
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::Simulator;

    fn small_run() -> (RunConfig, Trajectory) {
        let mut c = RunConfig::preset("free-decay").unwrap();
        c.params.n_modes = 4;
        c.params.n_cells = 32;
        c.params.dt = 1e-3;
        c.run.t_end = 0.01;
        let sim = Simulator::new(c.params.clone(), c.forcing.clone()).unwrap();
        let traj = sim.run(&c.initial_state().unwrap(), c.run.t_end, 1).unwrap();
        (c, traj)
    }

    #[test]
    fn render_then_parse_is_lossless() {
        let (c, traj) = small_run();
        let text = render(&c, &traj).unwrap();
        let file = parse(&text).unwrap();
        assert_eq!(file.config, c);
        assert!(file.completed());
        assert_eq!(file.rows.len(), traj.records.len());
        for (row, rec) in file.rows.iter().zip(&traj.records) {
            assert_eq!(row.t, rec.state.t);
            assert_eq!(row.b, rec.state.b);
            assert_eq!(row.ledger.kinetic, rec.ledger.kinetic);
            assert_eq!(row.ledger.power_in, rec.ledger.power_in);
        }
    }

    #[test]
    fn snapshots_round_trip() {
        let (_, traj) = small_run();
        let states = parse_snapshots(&render_snapshots(&traj)).unwrap();
        assert_eq!(states.len(), traj.records.len());
        for (s, rec) in states.iter().zip(&traj.records) {
            assert_eq!(s, &rec.state);
        }
    }

    #[test]
    fn truncation_reports_a_line() {
        let (c, traj) = small_run();
        let text = render(&c, &traj).unwrap();
        let cut: String = text.lines().take(30).map(|l| format!("{l}\n")).collect();
        match parse(&cut) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 31),
            other => panic!("{other:?}"),
        }
        let mangled = text.replacen("e-1,", "e-1;", 1);
        assert!(matches!(parse(&mangled), Err(Error::Parse { .. })));
    }

    #[test]
    fn version_mismatch_is_a_parse_error() {
        let (c, traj) = small_run();
        let text = render(&c, &traj).unwrap().replacen("trajectory v1", "trajectory v9", 1);
        match parse(&text) {
            Err(Error::Parse { line: 1, msg }) => assert!(msg.contains("version 9")),
            other => panic!("{other:?}"),
        }
    }
}
