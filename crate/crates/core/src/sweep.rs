//! Parameter sweeps: one run per grid point, summarised as a metrics row.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::fit::{half_cycle_peaks, log_decay_rate};
use crate::harness::config::{RunConfig, SweepConfig};
use crate::harness::trajfile;
use crate::integrator::{integrated_dissipation, Simulator, Trajectory};
use crate::rigid::envelope_fit;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub index: usize,
    pub axes: Vec<(String, f64)>,
    /// `completed`, `failed: ..` or `error: ..` when the run could not start.
    pub status: String,
    pub steps: usize,
    /// Log-fit rate of the complete half-cycle peaks of `b`; NaN if fewer than two.
    pub decay_rate: f64,
    /// Slope of the linear fit to the same peaks.
    pub envelope_slope: f64,
    pub total_dissipation: f64,
    pub final_mass_drift: f64,
    /// Sup-norm distance of `b(t)` to the previous row; NaN on the first row.
    pub sup_diff_prev: f64,
    pub max_fp_iterations: usize,
    pub energy_violations: usize,
}

/// Metrics of one finished trajectory; `sup_diff_prev` is left NaN.
pub fn metrics_for(index: usize, axes: Vec<(String, f64)>, traj: &Trajectory) -> RunMetrics {
    let t = traj.times();
    let b = traj.displacements();
    let peaks = half_cycle_peaks(&t, &b, true);
    let first = &traj.records[0].ledger;
    let last = &traj.last().ledger;
    RunMetrics {
        index,
        axes,
        status: trajfile::status_text(&traj.status),
        steps: traj.monitors.steps,
        decay_rate: log_decay_rate(&peaks).unwrap_or(f64::NAN),
        envelope_slope: envelope_fit(&t, &b).map_or(f64::NAN, |f| f.slope),
        total_dissipation: integrated_dissipation(traj),
        final_mass_drift: (last.mass - first.mass).abs() / first.mass,
        sup_diff_prev: f64::NAN,
        max_fp_iterations: traj.monitors.max_fp_iterations,
        energy_violations: traj.monitors.energy_violations,
    }
}

fn failed_metrics(index: usize, axes: Vec<(String, f64)>, msg: String) -> RunMetrics {
    RunMetrics {
        index,
        axes,
        status: format!("error: {}", msg.replace('\n', " ")),
        steps: 0,
        decay_rate: f64::NAN,
        envelope_slope: f64::NAN,
        total_dissipation: f64::NAN,
        final_mass_drift: f64::NAN,
        sup_diff_prev: f64::NAN,
        max_fp_iterations: 0,
        energy_violations: 0,
    }
}

pub fn run_config(config: &RunConfig) -> Result<Trajectory> {
    config.validate()?;
    let sim = Simulator::new(config.params.clone(), config.forcing.clone())?;
    sim.run(&config.initial_state()?, config.run.t_end, config.run.output_every)
}

/// Piecewise-linear value of `(t, y)` at `x`, clamped at the ends.
fn interp(t: &[f64], y: &[f64], x: f64) -> f64 {
    let i = t.partition_point(|&ti| ti < x);
    if i == 0 {
        return y[0];
    }
    if i >= t.len() {
        return y[t.len() - 1];
    }
    let w = (x - t[i - 1]) / (t[i] - t[i - 1]);
    y[i - 1] + w * (y[i] - y[i - 1])
}

/// `sup |b_a - b_b|` over the overlap of the two time ranges, sampled at the
/// times of both.
pub fn sup_distance(a: &Trajectory, b: &Trajectory) -> f64 {
    let (ta, ya) = (a.times(), a.displacements());
    let (tb, yb) = (b.times(), b.displacements());
    let hi = ta[ta.len() - 1].min(tb[tb.len() - 1]);
    let mut sup: f64 = 0.0;
    for &x in ta.iter().chain(&tb).filter(|&&x| x <= hi) {
        sup = sup.max((interp(&ta, &ya, x) - interp(&tb, &yb, x)).abs());
    }
    sup
}

/// Runs every grid point in parallel; rows come back in index order.
pub fn run_sweep(sweep: &SweepConfig) -> Vec<RunMetrics> {
    run_sweep_to(sweep, None).expect("no files are written without an output directory")
}

/// As [`run_sweep`], also writing `run_NNNN.csv` trajectory files into `out_dir`.
pub fn run_sweep_to(sweep: &SweepConfig, out_dir: Option<&Path>) -> Result<Vec<RunMetrics>> {
    let runs: Vec<(RunMetrics, Option<Trajectory>)> = (0..sweep.len())
        .into_par_iter()
        .map(|i| -> Result<_> {
            let axes = sweep.point(i);
            let config = match sweep.config_at(i) {
                Ok(c) => c,
                Err(e) => return Ok((failed_metrics(i, axes, e.to_string()), None)),
            };
            match run_config(&config) {
                Ok(traj) => {
                    if let Some(dir) = out_dir {
                        let text = trajfile::render(&config, &traj)?;
                        std::fs::write(dir.join(format!("run_{i:04}.csv")), text)?;
                    }
                    Ok((metrics_for(i, axes, &traj), Some(traj)))
                }
                Err(e) => Ok((failed_metrics(i, axes, e.to_string()), None)),
            }
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(runs.len());
    for i in 0..runs.len() {
        let mut m = runs[i].0.clone();
        if i > 0 {
            if let (Some(prev), Some(cur)) = (&runs[i - 1].1, &runs[i].1) {
                m.sup_diff_prev = sup_distance(prev, cur);
            }
        }
        rows.push(m);
    }
    Ok(rows)
}

/// Column names for a metrics table whose grid has the given axes.
pub fn metrics_header(axis_names: &[String]) -> String {
    let mut cols = vec!["index".to_string()];
    cols.extend(axis_names.iter().cloned());
    cols.extend(
        [
            "status",
            "steps",
            "decay_rate",
            "envelope_slope",
            "total_dissipation",
            "final_mass_drift",
            "sup_diff_prev",
            "max_fp_iterations",
            "energy_violations",
        ]
        .map(String::from),
    );
    cols.join(",")
}

pub fn metrics_line(m: &RunMetrics) -> String {
    let mut out = format!("{}", m.index);
    for (_, v) in &m.axes {
        let _ = write!(out, ",{v:.16e}");
    }
    // status may carry commas from error messages
    let _ = write!(out, ",\"{}\",{}", m.status.replace('"', "'"), m.steps);
    for v in [
        m.decay_rate,
        m.envelope_slope,
        m.total_dissipation,
        m.final_mass_drift,
        m.sup_diff_prev,
    ] {
        let _ = write!(out, ",{v:.16e}");
    }
    let _ = write!(out, ",{},{}", m.max_fp_iterations, m.energy_violations);
    out
}

pub fn metrics_csv(rows: &[RunMetrics]) -> String {
    let names: Vec<String> = rows
        .first()
        .map(|m| m.axes.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let mut out = metrics_header(&names);
    out.push('\n');
    for m in rows {
        out.push_str(&metrics_line(m));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interp_is_exact_on_nodes_and_linear_between() {
        let t = [0.0, 1.0, 3.0];
        let y = [0.0, 2.0, 6.0];
        assert_eq!(interp(&t, &y, 1.0), 2.0);
        assert_eq!(interp(&t, &y, 2.0), 4.0);
        assert_eq!(interp(&t, &y, 5.0), 6.0);
    }

    #[test]
    fn sweep_rows_are_ordered_and_chained() {
        let s = SweepConfig::from_toml(
            "preset = \"free-decay\"\n[base.params]\nn_modes = 4\nn_cells = 32\ndt = 1e-3\n\
             [base.run]\nt_end = 0.05\n[axes]\nmu = [1.0, 1.0, 2.0]\n",
        )
        .unwrap();
        let rows = run_sweep(&s);
        assert_eq!(rows.len(), 3);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.index, i);
            assert_eq!(r.status, "completed");
        }
        assert!(rows[0].sup_diff_prev.is_nan());
        assert_eq!(rows[1].sup_diff_prev, 0.0);
        assert!(rows[2].sup_diff_prev > 0.0);
        let csv = metrics_csv(&rows);
        assert!(csv.starts_with("index,mu,status,"));
        assert_eq!(csv.lines().count(), 4);
    }
}
