//! Acceptance criteria, one PASS/FAIL line each. Runs sequentially so the
//! wall-clock budgets are measured without contention.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use fluidosc::basis::{assemble_mass, Basis};
use fluidosc::continuity::{continuity_step, DensityGrid};
use fluidosc::diagnostics::{
    empirical_order, momentum_law, weak_continuity_residual, weak_momentum_residual, TestFunction,
    TimeRule, WeakOptions,
};
use fluidosc::fit::{half_cycle_peaks, linear_fit, log_decay_rate};
use fluidosc::harness::config::{RunConfig, SweepConfig};
use fluidosc::harness::trajfile;
use fluidosc::integrator::integrated_dissipation;
use fluidosc::rigid::{envelope_decay_rate, envelope_fit, rigid_ode, steady_amplitude, Particular};
use fluidosc::sweep::{run_config, run_sweep};
use fluidosc::{run, FluidParams, FluidState, ForcingSignal, RigidParams, Trajectory};
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rigid(a: f64, omega: f64, b0: f64, bdot0: f64) -> RigidParams {
    RigidParams {
        k_spring: 1.0,
        mass: 1.0,
        forcing: ForcingSignal::sinusoid(a, omega),
        b0,
        bdot0,
    }
}

fn rigid_resonance() -> Outcome {
    let start = Instant::now();
    // c1 = c2 = 0 leaves b = -(t/2) cos t
    let p = rigid(1.0, 1.0, 0.0, -0.5);
    let ode = rigid_ode(&p, 10.0, 1e-4).unwrap();
    let cf = p.closed_form().unwrap();
    let homogeneous = cf.c1.abs() + cf.c2.abs();
    let err = ode
        .t
        .iter()
        .zip(&ode.b)
        .map(|(t, b)| (b - cf.eval(*t).0).abs().max((b + 0.5 * t * t.cos()).abs()))
        .fold(0.0, f64::max);
    let long = rigid_ode(&p, 40.0 * PI, 1e-4).unwrap();
    let slope = envelope_fit(&long.t, &long.b).unwrap().slope;
    let rel = (slope - 0.5).abs() / 0.5;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err <= 1e-6 && rel <= 0.01 && homogeneous == 0.0 && secs < 1.0,
        format!("max err {err:.2e} (<= 1e-6), envelope slope {slope:.5} (rel {rel:.1e} <= 1e-2), {secs:.2}s"),
    )
}

fn nonresonant_amplitude() -> Outcome {
    let start = Instant::now();
    let p = RigidParams {
        k_spring: 1.0,
        mass: 1.0,
        forcing: ForcingSignal::sinusoid(1.0, 2.0),
        b0: 0.0,
        bdot0: -2.0 / 3.0,
    };
    let exact = -1.0 / 3.0;
    let closed = match p.closed_form().unwrap().particular {
        Particular::Steady { amplitude, .. } => amplitude,
        _ => f64::NAN,
    };
    let ode = rigid_ode(&p, 20.0 * PI, 1e-4).unwrap();
    let fitted = steady_amplitude(&ode.t, &ode.b, 2.0, 1.0).unwrap();
    let err = (closed - exact).abs().max((fitted - exact).abs());
    let secs = start.elapsed().as_secs_f64();
    outcome(
        err <= 1e-6 && secs < 1.0,
        format!("closed {closed:.12}, fitted {fitted:.12}, err {err:.2e} (<= 1e-6), {secs:.2}s"),
    )
}

fn reference_run(forcing: ForcingSignal) -> (Trajectory, f64) {
    let p = FluidParams::reference();
    let b0 = if forcing == ForcingSignal::Zero { 0.1 } else { 0.0 };
    let s = FluidState::uniform(&p, 1.0, b0, 0.0).unwrap();
    let start = Instant::now();
    let traj = run(&s, &p, &forcing, 5.0, 10).unwrap();
    (traj, start.elapsed().as_secs_f64())
}

fn mass_conservation(free: &(Trajectory, f64)) -> Outcome {
    let (traj, secs) = free;
    let drift = traj.monitors.max_mass_drift;
    outcome(
        traj.status.is_completed() && drift <= 1e-10 && *secs < 60.0,
        format!("{} steps, max relative drift {drift:.2e} (<= 1e-10), {secs:.1}s (< 60s)", traj.monitors.steps),
    )
}

fn energy_inequality(free: &Trajectory, forced: &Trajectory) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, traj) in [("free-decay", free), ("forced", forced)] {
        let m = &traj.monitors;
        ok &= traj.status.is_completed() && m.energy_violations == 0;
        parts.push(format!(
            "{name}: {} violations in {} steps, max defect {:.2e}",
            m.energy_violations, m.steps, m.max_energy_defect
        ));
    }
    outcome(ok, parts.join("; "))
}

fn mass_operator_bounds() -> Outcome {
    let start = Instant::now();
    let basis = Basis::new(1.0, 16, 256).unwrap();
    let g_min = SymmetricEigen::new(basis.gram()).eigenvalues.min();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_margin = f64::INFINITY;
    let mut worst_resolvent: f64 = 0.0;
    let mut prev: Option<(Vec<f64>, nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)> = None;
    for _ in 0..1000 {
        let rho: Vec<f64> = (0..256).map(|_| rng.random_range(0.5..=2.0)).collect();
        let m = assemble_mass(&rho, &basis).unwrap();
        let lam = SymmetricEigen::new(m.matrix().clone()).eigenvalues.min();
        let rho_min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        worst_margin = worst_margin.min(lam / (rho_min * g_min));
        let inv = m.inverse();
        if let Some((_, pm, pinv)) = &prev {
            let lhs = pinv - &inv;
            let rhs = pinv * (m.matrix() - pm) * &inv;
            worst_resolvent = worst_resolvent.max((&lhs - rhs).norm() / lhs.norm());
        }
        prev = Some((rho, m.matrix().clone(), inv));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_margin >= 1.0 - 1e-12 && worst_resolvent <= 1e-10 && secs < 10.0,
        format!(
            "min lambda_min / (min rho lambda_min(G)) = {worst_margin:.4}, resolvent rel err {worst_resolvent:.2e} (<= 1e-10), {secs:.2}s"
        ),
    )
}

fn continuity_analytic() -> Outcome {
    let (n, eps, dt, t_end) = (512usize, 0.1, 1e-4, 0.1);
    let dx = 1.0 / n as f64;
    let cos_x = |i: usize| (PI * (i as f64 + 0.5) * dx).cos();
    let amplitude = |rho: &[f64]| {
        let num: f64 = (0..n).map(|i| rho[i] * cos_x(i)).sum();
        let den: f64 = (0..n).map(|i| cos_x(i) * cos_x(i)).sum();
        num / den
    };
    let rho: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * cos_x(i)).collect();
    let a0 = amplitude(&rho);
    let mut grid = DensityGrid::new(rho, dx);
    let still = vec![0.0; n + 1];
    for _ in 0..1000 {
        grid = continuity_step(&grid, &still, dt, eps).unwrap();
    }
    let exact = (-eps * PI * PI * t_end).exp();
    let rel = (amplitude(&grid.rho) / a0 - exact).abs() / exact;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut bad = 0;
    for _ in 0..100 {
        let cells = rng.random_range(8..200);
        let rho: Vec<f64> = (0..cells).map(|_| rng.random_range(0.01..10.0)).collect();
        let g = DensityGrid::new(rho, 1.0 / cells as f64);
        let step_dt = 10f64.powf(rng.random_range(-5.0..-1.0));
        let e = 10f64.powf(rng.random_range(-4.0..0.0));
        let next = continuity_step(&g, &vec![0.0; cells + 1], step_dt, e).unwrap();
        let tol = 1e-12 * g.max();
        if !(next.min() > 0.0 && next.min() >= g.min() - tol && next.max() <= g.max() + tol) {
            bad += 1;
        }
    }
    outcome(
        rel <= 1e-4 && bad == 0,
        format!("decay factor rel err {rel:.2e} (<= 1e-4), {bad}/100 random cases break positivity or the max principle"),
    )
}

fn smooth_run(n_cells: usize, n_modes: usize, dt: f64, t_end: f64) -> Trajectory {
    let p = FluidParams {
        n_cells,
        n_modes,
        dt,
        ..FluidParams::reference()
    };
    let rho = FluidState::cosine_profile(&p, 1.0, 0.1, 1);
    let s = FluidState::new(0.0, rho, vec![0.0; n_modes], 0.1, 0.0).unwrap();
    run(&s, &p, &ForcingSignal::sinusoid(0.1, 1.0), t_end, 1).unwrap()
}

fn weak_residuals() -> Outcome {
    let horizon = 0.5;
    let bumps = [
        TestFunction::bump(horizon, 0.0, 1.0),
        TestFunction::bump(horizon, 0.125, 0.625),
        TestFunction::bump(horizon, 0.375, 0.875),
    ];
    let opts = WeakOptions::default();
    let mut cont = Vec::new();
    let mut mom = Vec::new();
    for (n_cells, n_modes, dt) in [(64, 4, 4e-4), (128, 8, 2e-4), (256, 16, 1e-4)] {
        let traj = smooth_run(n_cells, n_modes, dt, horizon);
        let (mut c, mut m) = (0.0f64, 0.0f64);
        for phi in &bumps {
            c = c.max(weak_continuity_residual(&traj, phi, TimeRule::Implicit).unwrap().abs());
            m = m.max(weak_momentum_residual(&traj, phi, &opts).unwrap().abs());
        }
        cont.push(c);
        mom.push(m);
    }
    let orders = |r: &[f64]| [empirical_order(r[0], r[1]), empirical_order(r[1], r[2])];
    let (oc, om) = (orders(&cont), orders(&mom));
    let ok = oc.iter().chain(&om).all(|o| *o >= 1.0);
    outcome(
        ok,
        format!(
            "continuity {:.2e} {:.2e} {:.2e} orders {:.2} {:.2}; momentum {:.2e} {:.2e} {:.2e} orders {:.2} {:.2} (>= 1)",
            cont[0], cont[1], cont[2], oc[0], oc[1], mom[0], mom[1], mom[2], om[0], om[1]
        ),
    )
}

fn global_momentum_law() -> Outcome {
    let mut c = Vec::new();
    let mut integrated = Vec::new();
    for dt in [4e-4, 2e-4, 1e-4] {
        let law = momentum_law(&smooth_run(256, 16, dt, 1.0)).unwrap();
        c.push(law.c_max);
        integrated.push(law.integrated);
    }
    let spread = c.iter().copied().fold(0.0, f64::max) / c.iter().copied().fold(f64::INFINITY, f64::min);
    let ratios = [integrated[0] / integrated[1], integrated[1] / integrated[2]];
    let ok = spread <= 1.1 && ratios.iter().all(|r| (r - 2.0).abs() <= 0.2);
    outcome(
        ok,
        format!(
            "C = {:.5} {:.5} {:.5} (spread {spread:.3} <= 1.1); integrated {:.2e} {:.2e} {:.2e}, halving ratios {:.3} {:.3}",
            c[0], c[1], c[2], integrated[0], integrated[1], integrated[2], ratios[0], ratios[1]
        ),
    )
}

fn damping_contrast() -> Outcome {
    // compressible free decay
    let p = FluidParams {
        dt: 4e-4,
        ..FluidParams::reference()
    };
    let s = FluidState::uniform(&p, 1.0, 0.1, 0.0).unwrap();
    let traj = run(&s, &p, &ForcingSignal::Zero, 20.0, 10).unwrap();
    let peaks = half_cycle_peaks(&traj.times(), &traj.displacements(), true);
    let fluid_rate = log_decay_rate(&peaks).unwrap_or(f64::NAN);
    let dissipation = integrated_dissipation(&traj);

    // rigid body with the same spring and total mass
    let mass = traj.records[0].ledger.mass;
    let rigid = RigidParams {
        k_spring: p.k_spring,
        mass,
        forcing: ForcingSignal::Zero,
        b0: 0.1,
        bdot0: 0.0,
    };
    let ode = rigid_ode(&rigid, 20.0, 1e-3).unwrap();
    let rigid_rate = envelope_decay_rate(&ode.t, &ode.b, &ode.bdot, rigid.natural_frequency()).unwrap();

    // small-amplitude release with no pressure, viscosity going to zero
    let sweep = SweepConfig::from_toml(
        "preset = \"free-decay\"\n[base.params]\na = 0.0\ndelta = 0.0\nn_cells = 128\nn_modes = 16\ndt = 1e-4\n\
         [base.initial]\nb0 = 1e-5\n[base.run]\nt_end = 5.0\noutput_every = 10\n\
         [axes]\nmu = [8e-5, 4e-5, 2e-5, 1e-5, 5e-6]\n",
    )
    .unwrap();
    let rows = run_sweep(&sweep);
    let mus: Vec<f64> = rows.iter().map(|r| r.axes[0].1).collect();
    let rates: Vec<f64> = rows.iter().map(|r| r.decay_rate).collect();
    let monotone = rates.windows(2).all(|w| w[1] < w[0]) && rates.iter().all(|r| *r > 0.0);
    let fit = linear_fit(&mus, &rates).unwrap();
    let toward_zero = fit.intercept.abs() <= 0.1 * rates[0];

    let ok = traj.status.is_completed()
        && dissipation > 0.0
        && fluid_rate > 0.0
        && rigid.decay_rate() == 0.0
        && rigid_rate.abs() <= 1e-12
        && monotone
        && toward_zero;
    outcome(
        ok,
        format!(
            "fluid rate {fluid_rate:.4e} > 0, dissipation {dissipation:.3e} > 0, rigid rate {} (fitted {rigid_rate:.1e}); \
             mu sweep rates {} intercept {:.2e} (<= {:.2e})",
            rigid.decay_rate(),
            rates.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(" "),
            fit.intercept,
            0.1 * rates[0]
        ),
    )
}

fn determinism() -> Outcome {
    let mut ok = true;
    let mut total = 0;
    for name in ["equilibrium", "free-decay", "forced"] {
        for every in [1, 7] {
            let mut c = RunConfig::preset(name).unwrap();
            c.run.t_end = 0.1;
            c.run.output_every = every;
            let first = trajfile::render(&c, &run_config(&c).unwrap()).unwrap();
            let header = trajfile::parse(&first).unwrap().config;
            let second = trajfile::render(&header, &run_config(&header).unwrap()).unwrap();
            ok &= first.as_bytes() == second.as_bytes();
            total += 1;
        }
    }
    outcome(ok, format!("{total} files re-run from their headers, byte-identical: {ok}"))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 rigid resonance", rigid_resonance()));
    results.push(("2 non-resonant amplitude", nonresonant_amplitude()));
    let free = reference_run(ForcingSignal::Zero);
    let forced = reference_run(ForcingSignal::sinusoid(0.1, 1.0));
    results.push(("3 mass conservation", mass_conservation(&free)));
    results.push(("4 energy inequality", energy_inequality(&free.0, &forced.0)));
    results.push(("5 mass-operator bounds", mass_operator_bounds()));
    results.push(("6 continuity analytic check", continuity_analytic()));
    results.push(("7 weak residual convergence", weak_residuals()));
    results.push(("8 global momentum law", global_momentum_law()));
    results.push(("9 damping contrast", damping_contrast()));
    results.push(("10 determinism and round-trip", determinism()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
