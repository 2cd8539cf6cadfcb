//! Coupled time stepping by fixed-point iteration between the continuity
//! solve and the momentum solve.
//!
//! One step from `t` to `t + dt` looks for the new state `(rho', c', b')` with
//!
//! ```text
//! rho' = S(rho, v')                                   (implicit continuity)
//! M(rho') c' = M(rho) c + dt F(rho', c', b', t + dt)   (momentum, all forces at t + dt)
//! b' = b + dt beta'
//! ```
//!
//! Viscosity and the spring are solved implicitly inside each sweep; convection,
//! pressure and the epsilon coupling are lagged by one sweep. At the fixed point
//! every force is evaluated at the new level and the discrete energy balance
//! closes as an inequality with the numerical dissipation of the step.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{assemble_mass, Basis, MassOperator};
use crate::continuity::{advective_flux, cfl_ratio, continuity_step, DensityGrid};
use crate::error::{Error, Result};
use crate::model::{energy_row, EnergyLedgerRow, FluidParams, FluidState, ForcingSignal};
use crate::momentum::{convective_force, eps_force, newton_residual, pressure_force, viscous_matrix};

/// Number of dt halvings allowed before a step is abandoned.
pub const MAX_HALVINGS: u32 = 10;

/// Diagnostics of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub dt_used: f64,
    pub fp_iterations: usize,
    /// `max |c^(m) - c^(m-1)|` of the last sweep.
    pub fp_residual: f64,
    /// Positive part of `E' - E + dt (D' - W')`.
    pub energy_defect: f64,
    pub newton_residual: f64,
    pub cfl_ratio: f64,
    /// Halvings needed before the step was accepted.
    pub retries: u32,
}

/// Energy tolerance `1e-8 (1 + E)` applied to every step.
pub fn energy_tolerance(energy: f64) -> f64 {
    1e-8 * (1.0 + energy.abs())
}

/// One stored time level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub state: FluidState,
    pub ledger: EnergyLedgerRow,
    pub report: StepReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    Failed(String),
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

/// Run-level monitors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMonitors {
    pub steps: usize,
    pub rejected_attempts: usize,
    /// `max |mass(t) - mass(0)| / mass(0)` over every accepted step.
    pub max_mass_drift: f64,
    /// Accepted steps whose energy defect exceeded the tolerance.
    pub energy_violations: usize,
    pub max_energy_defect: f64,
    pub max_fp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: FluidParams,
    pub forcing: ForcingSignal,
    pub output_every: usize,
    pub records: Vec<TrajectoryRecord>,
    pub status: RunStatus,
    pub monitors: RunMonitors,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.state.t).collect()
    }

    pub fn displacements(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.state.b).collect()
    }

    pub fn last(&self) -> &TrajectoryRecord {
        self.records.last().expect("trajectory holds the initial record")
    }
}

/// Why a single attempt was abandoned.
#[derive(Debug)]
enum Rejection {
    Retry(String),
    Fatal(Error),
}

impl From<Error> for Rejection {
    fn from(e: Error) -> Self {
        match e {
            Error::Cfl { .. } | Error::Positivity { .. } | Error::SingularDensity { .. } => {
                Rejection::Retry(e.to_string())
            }
            other => Rejection::Fatal(other),
        }
    }
}

/// The coupled fluid-oscillator system with its discretization.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: FluidParams,
    forcing: ForcingSignal,
    basis: Basis,
    stiffness: DMatrix<f64>,
}

impl Simulator {
    pub fn new(params: FluidParams, forcing: ForcingSignal) -> Result<Self> {
        params.validate()?;
        forcing.validate()?;
        let basis = Basis::new(params.length, params.n_modes, params.n_cells)?;
        let stiffness = viscous_matrix(&basis) * params.longitudinal_viscosity();
        Ok(Self {
            params,
            forcing,
            basis,
            stiffness,
        })
    }

    pub fn params(&self) -> &FluidParams {
        &self.params
    }

    pub fn forcing(&self) -> &ForcingSignal {
        &self.forcing
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn ledger(&self, state: &FluidState) -> Result<EnergyLedgerRow> {
        energy_row(state, &self.params, &self.forcing, &self.basis)
    }

    fn check_state(&self, state: &FluidState) -> Result<()> {
        if state.rho.len() != self.params.n_cells || state.v_coeffs.len() != self.params.n_modes {
            return Err(Error::Config(format!(
                "state has {} cells and {} modes, parameters expect {} and {}",
                state.rho.len(),
                state.v_coeffs.len(),
                self.params.n_cells,
                self.params.n_modes
            )));
        }
        state.check_density()
    }

    /// Advances by the nominal `dt`, halving on rejection.
    pub fn step(&self, state: &FluidState) -> Result<(FluidState, StepReport)> {
        let ledger = self.ledger(state)?;
        let (next, _, report) = self.step_with(state, &ledger, self.params.dt)?;
        Ok((next, report))
    }

    /// Advances by `dt` (or by successive halves of it) from `state`, whose ledger is `ledger`.
    pub fn step_with(
        &self,
        state: &FluidState,
        ledger: &EnergyLedgerRow,
        dt: f64,
    ) -> Result<(FluidState, EnergyLedgerRow, StepReport)> {
        self.check_state(state)?;
        let dt_min = dt / f64::from(1u32 << MAX_HALVINGS);
        let mut trial = dt;
        let mut retries = 0;
        loop {
            match self.attempt(state, ledger, trial) {
                Ok((next, row, mut report)) => {
                    report.retries = retries;
                    return Ok((next, row, report));
                }
                Err(Rejection::Fatal(e)) => return Err(e),
                Err(Rejection::Retry(cause)) => {
                    trial *= 0.5;
                    retries += 1;
                    if trial < dt_min {
                        return Err(Error::DtUnderflow {
                            dt: trial,
                            dt_min,
                            cause,
                        });
                    }
                }
            }
        }
    }

    fn attempt(
        &self,
        state: &FluidState,
        ledger: &EnergyLedgerRow,
        dt: f64,
    ) -> std::result::Result<(FluidState, EnergyLedgerRow, StepReport), Rejection> {
        let params = &self.params;
        let basis = &self.basis;
        let t_new = state.t + dt;
        let anchor = self.forcing.eval(t_new)?;

        let grid = DensityGrid::new(state.rho.clone(), basis.dx());
        let c_old = state.augmented();
        let momentum_old = assemble_mass(&state.rho, basis)?.apply(&c_old);

        let mut c = c_old.clone();
        let mut rho_new = state.rho.clone();
        let mut residuals: Vec<f64> = Vec::with_capacity(params.fp_max_iter);
        let mut cfl = 0.0;
        let mut converged = false;

        for _ in 0..params.fp_max_iter {
            let v_faces = basis.reconstruct_faces(&c[1..]);
            cfl = cfl_ratio(&v_faces, dt, basis.dx());
            rho_new = continuity_step(&grid, &v_faces, dt, params.epsilon)?.rho;

            let u = basis.reconstruct_augmented(&c);
            let flux = advective_flux(&rho_new, &v_faces);
            let mut rhs = momentum_old.clone();
            let forces = [
                pressure_force(&rho_new, params, basis),
                convective_force(&flux, &u, basis),
                eps_force(&rho_new, &u, params.epsilon, basis),
            ];
            for f in &forces {
                rhs.iter_mut().zip(f).for_each(|(r, x)| *r += dt * x);
            }
            rhs[0] -= dt * params.k_spring * (state.b - anchor);

            let mut system = assemble_mass(&rho_new, basis)?.matrix().clone();
            system += &self.stiffness * dt;
            system[(0, 0)] += dt * dt * params.k_spring;
            let solver = MassOperator::from_matrix(system)?;
            let c_next = solver.solve(&rhs);

            let residual = c_next
                .iter()
                .zip(&c)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            c = c_next;
            residuals.push(residual);
            if !residual.is_finite() {
                return Err(Rejection::Retry("fixed-point iterate is not finite".into()));
            }
            if residual <= params.fp_tol {
                converged = true;
                break;
            }
            let n = residuals.len();
            if n >= 4 && (n - 3..n).all(|i| residuals[i] > residuals[i - 1]) {
                return Err(Rejection::Retry(format!(
                    "fixed-point residual grew for 3 consecutive sweeps (last {:e})",
                    residuals[n - 1]
                )));
            }
        }
        if !converged {
            return Err(Rejection::Retry(format!(
                "fixed point not reached in {} sweeps (residual {:e})",
                params.fp_max_iter,
                residuals.last().copied().unwrap_or(f64::NAN)
            )));
        }

        let next = FluidState {
            t: t_new,
            rho: rho_new,
            v_coeffs: c[1..].to_vec(),
            b: state.b + dt * c[0],
            beta: c[0],
        };
        let row = self.ledger(&next)?;
        let defect = row.energy() - ledger.energy() + dt * (row.dissipation() - row.power_in);
        if defect > energy_tolerance(ledger.energy()) {
            return Err(Rejection::Retry(format!(
                "energy inequality violated by {defect:e}"
            )));
        }
        let report = StepReport {
            dt_used: dt,
            fp_iterations: residuals.len(),
            fp_residual: residuals.last().copied().unwrap_or(0.0),
            energy_defect: defect.max(0.0),
            newton_residual: newton_residual(&next, params, &self.forcing, basis)?,
            cfl_ratio: cfl,
            retries: 0,
        };
        Ok((next, row, report))
    }

    /// Integrates from `initial` to `t_end`, keeping every `output_every`-th
    /// accepted step plus the final one.
    pub fn run(&self, initial: &FluidState, t_end: f64, output_every: usize) -> Result<Trajectory> {
        self.check_state(initial)?;
        if !(t_end > initial.t) {
            return Err(Error::Config(format!(
                "t_end = {t_end} must exceed the initial time {}",
                initial.t
            )));
        }
        let output_every = output_every.max(1);
        let ledger0 = self.ledger(initial)?;
        let report0 = StepReport {
            newton_residual: newton_residual(initial, &self.params, &self.forcing, &self.basis)?,
            ..Default::default()
        };
        let mut records = vec![TrajectoryRecord {
            state: initial.clone(),
            ledger: ledger0,
            report: report0,
        }];
        let mut monitors = RunMonitors::default();
        let mut status = RunStatus::Completed;

        let dt = self.params.dt;
        let mass0 = ledger0.mass;
        let mut state = initial.clone();
        let mut ledger = ledger0;
        let mut pending: Option<TrajectoryRecord> = None;

        while t_end - state.t > 1e-9 * dt {
            let remaining = t_end - state.t;
            let trial = if remaining < dt * (1.0 + 1e-9) { remaining } else { dt };
            match self.step_with(&state, &ledger, trial) {
                Ok((mut next, row, report)) => {
                    if trial == remaining && report.retries == 0 {
                        next.t = t_end;
                    }
                    monitors.steps += 1;
                    monitors.rejected_attempts += report.retries as usize;
                    monitors.max_mass_drift =
                        monitors.max_mass_drift.max((row.mass - mass0).abs() / mass0);
                    if report.energy_defect > energy_tolerance(ledger.energy()) {
                        monitors.energy_violations += 1;
                    }
                    monitors.max_energy_defect = monitors.max_energy_defect.max(report.energy_defect);
                    monitors.max_fp_iterations = monitors.max_fp_iterations.max(report.fp_iterations);

                    let mut row = row;
                    row.t = next.t;
                    let record = TrajectoryRecord {
                        state: next.clone(),
                        ledger: row,
                        report,
                    };
                    if monitors.steps % output_every == 0 {
                        records.push(record);
                        pending = None;
                    } else {
                        pending = Some(record);
                    }
                    state = next;
                    ledger = row;
                }
                Err(e) => {
                    status = RunStatus::Failed(e.to_string());
                    break;
                }
            }
        }
        if let Some(record) = pending {
            records.push(record);
        }
        Ok(Trajectory {
            params: self.params.clone(),
            forcing: self.forcing.clone(),
            output_every,
            records,
            status,
            monitors,
        })
    }
}

/// One coupled step with the nominal `params.dt`.
pub fn step(
    state: &FluidState,
    params: &FluidParams,
    forcing: &ForcingSignal,
) -> Result<(FluidState, StepReport)> {
    Simulator::new(params.clone(), forcing.clone())?.step(state)
}

/// Whole trajectory from `initial` to `t_end`.
pub fn run(
    initial: &FluidState,
    params: &FluidParams,
    forcing: &ForcingSignal,
    t_end: f64,
    output_every: usize,
) -> Result<Trajectory> {
    Simulator::new(params.clone(), forcing.clone())?.run(initial, t_end, output_every)
}

/// Time-integrated dissipation `sum dt D'` over the stored records.
pub fn integrated_dissipation(traj: &Trajectory) -> f64 {
    traj.records
        .windows(2)
        .map(|w| (w[1].state.t - w[0].state.t) * w[1].ledger.dissipation())
        .sum()
}
