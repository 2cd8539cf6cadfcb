use fluidosc::integrator::{energy_tolerance, integrated_dissipation};
use fluidosc::{run, step, FluidParams, FluidState, ForcingSignal, RunStatus, Simulator};
use proptest::prelude::*;

fn small() -> FluidParams {
    FluidParams {
        n_modes: 4,
        n_cells: 32,
        dt: 1e-3,
        ..FluidParams::reference()
    }
}

#[test]
fn equilibrium_is_reproduced_in_one_iteration() {
    let p = FluidParams::reference();
    let s = FluidState::uniform(&p, 1.0, 0.0, 0.0).unwrap();
    let (next, report) = step(&s, &p, &ForcingSignal::Zero).unwrap();
    assert_eq!(next.rho, s.rho);
    assert_eq!(next.v_coeffs, s.v_coeffs);
    assert_eq!((next.b, next.beta), (0.0, 0.0));
    assert_eq!(report.fp_iterations, 1);
    assert_eq!(report.retries, 0);
}

#[test]
fn equilibrium_run_is_constant() {
    let p = small();
    let s = FluidState::uniform(&p, 1.0, 0.0, 0.0).unwrap();
    let traj = run(&s, &p, &ForcingSignal::Zero, 0.5, 7).unwrap();
    assert!(traj.status.is_completed());
    assert_eq!(traj.records.first().unwrap().state, s);
    for r in &traj.records {
        assert_eq!(r.state.rho, s.rho);
        assert_eq!(r.state.v_coeffs, s.v_coeffs);
        assert_eq!(r.state.b, 0.0);
    }
    assert_eq!(traj.last().state.t, 0.5);
}

#[test]
fn times_increase_strictly() {
    let p = small();
    let s = FluidState::uniform(&p, 1.0, 0.05, 0.0).unwrap();
    let traj = run(&s, &p, &ForcingSignal::sinusoid(0.1, 2.0), 0.2, 3).unwrap();
    let t = traj.times();
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(t[0], 0.0);
    assert_eq!(*t.last().unwrap(), 0.2);
}

#[test]
fn mass_drift_over_ten_thousand_steps() {
    let p = small();
    let rho = FluidState::cosine_profile(&p, 1.0, 0.2, 2);
    let s = FluidState::new(0.0, rho, vec![0.0; 4], 0.1, 0.0).unwrap();
    let traj = run(&s, &p, &ForcingSignal::sinusoid(0.05, 1.5), 10.0, 100).unwrap();
    assert!(traj.status.is_completed());
    assert!(traj.monitors.steps >= 10_000);
    assert!(traj.monitors.max_mass_drift <= 1e-10, "{}", traj.monitors.max_mass_drift);
    let n = traj.monitors.steps as f64;
    let m0 = traj.records[0].ledger.mass;
    for r in &traj.records {
        assert!((r.ledger.mass - m0).abs() <= n * 1e-12 * m0);
    }
}

#[test]
fn free_decay_loses_energy() {
    let p = small();
    let s = FluidState::uniform(&p, 1.0, 1.0, 0.0).unwrap();
    let traj = run(&s, &p, &ForcingSignal::Zero, 3.0, 1).unwrap();
    assert!(traj.status.is_completed(), "{:?}", traj.status);
    for w in traj.records.windows(2) {
        let (e0, e1) = (w[0].ledger.energy(), w[1].ledger.energy());
        assert!(e1 <= e0 + energy_tolerance(e0));
    }
    assert!(integrated_dissipation(&traj) > 0.0);
    assert!(traj.last().ledger.energy() < traj.records[0].ledger.energy());
}

#[test]
fn forced_run_satisfies_the_step_inequality() {
    let p = FluidParams {
        n_modes: 8,
        n_cells: 64,
        dt: 5e-4,
        ..FluidParams::reference()
    };
    let s = FluidState::uniform(&p, 1.0, 0.0, 0.0).unwrap();
    let traj = run(&s, &p, &ForcingSignal::sinusoid(0.2, 1.0), 2.0, 1).unwrap();
    assert!(traj.status.is_completed());
    assert_eq!(traj.monitors.energy_violations, 0);
    for w in traj.records.windows(2) {
        let (a, b) = (&w[0].ledger, &w[1].ledger);
        let dt = w[1].state.t - w[0].state.t;
        let defect = b.energy() - a.energy() + dt * (b.dissipation() - b.power_in);
        assert!(defect <= energy_tolerance(a.energy()), "{defect}");
    }
    assert!(traj.records.iter().any(|r| r.ledger.power_in > 0.0));
}

#[test]
fn stiff_fluid_follows_the_rigid_spring() {
    // a nearly incompressible fluid moves with the container, so b tracks cos t
    let p = FluidParams {
        a: 100.0,
        mu: 1e-3,
        delta: 0.0,
        epsilon: 0.0,
        n_modes: 16,
        n_cells: 128,
        dt: 1e-3,
        ..FluidParams::reference()
    };
    let s = FluidState::uniform(&p, 1.0, 1.0, 0.0).unwrap();
    let traj = run(&s, &p, &ForcingSignal::Zero, 10.0, 1).unwrap();
    assert!(traj.status.is_completed(), "{:?}", traj.status);
    let err = traj
        .records
        .iter()
        .map(|r| (r.state.b - r.state.t.cos()).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-2, "{err}");
}

#[test]
fn large_velocity_forces_dt_halving() {
    let p = small();
    let mut s = FluidState::uniform(&p, 1.0, 0.0, 0.0).unwrap();
    s.v_coeffs[0] = 2.0;
    let p = FluidParams { dt: 0.05, ..p };
    let sim = Simulator::new(p, ForcingSignal::Zero).unwrap();
    let (next, report) = sim.step(&s).unwrap();
    assert!(report.retries > 0);
    assert!(report.dt_used < 0.05);
    assert!(report.cfl_ratio <= 1.0);
    assert_eq!(next.t, report.dt_used);
}

#[test]
fn unreachable_fixed_point_fails_with_partial_trajectory() {
    let p = FluidParams {
        fp_max_iter: 1,
        ..small()
    };
    let s = FluidState::uniform(&p, 1.0, 0.1, 0.0).unwrap();
    let traj = run(&s, &p, &ForcingSignal::Zero, 0.1, 1).unwrap();
    match &traj.status {
        RunStatus::Failed(msg) => assert!(msg.contains("underflow"), "{msg}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(traj.records.len(), 1);
    assert_eq!(traj.records[0].state, s);
}

#[test]
fn run_rejects_bad_horizon_and_state() {
    let p = small();
    let s = FluidState::uniform(&p, 1.0, 0.0, 0.0).unwrap();
    assert!(run(&s, &p, &ForcingSignal::Zero, 0.0, 1).is_err());
    let wrong = FluidState::uniform(&FluidParams { n_cells: 16, ..p.clone() }, 1.0, 0.0, 0.0).unwrap();
    assert!(run(&wrong, &p, &ForcingSignal::Zero, 1.0, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_starts_keep_every_invariant(
        amp in 0.0f64..0.3,
        mode in 1usize..4,
        b0 in -0.2f64..0.2,
        beta0 in -0.2f64..0.2,
        v in prop::collection::vec(-0.2f64..0.2, 4),
        forcing_amp in 0.0f64..0.2,
    ) {
        let p = small();
        let rho = FluidState::cosine_profile(&p, 1.0, amp, mode);
        let s = FluidState::new(0.0, rho, v, b0, beta0).unwrap();
        let f = ForcingSignal::sinusoid(forcing_amp, 1.3);
        let a = run(&s, &p, &f, 0.1, 1).unwrap();
        prop_assert!(a.status.is_completed());
        prop_assert_eq!(a.monitors.energy_violations, 0);
        prop_assert!(a.monitors.max_mass_drift <= 1e-12);
        prop_assert!(a.records.iter().all(|r| r.state.min_rho() > 0.0));
        let b = run(&s, &p, &f, 0.1, 1).unwrap();
        prop_assert_eq!(a.records, b.records);
    }
}
