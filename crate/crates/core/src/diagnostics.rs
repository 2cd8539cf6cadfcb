//! Post-hoc checks on stored trajectories: weak-form residuals, the energy
//! audit, the `rho log rho` monitor and the global momentum law.
//!
//! Everything here reads states and ledger rows only; nothing calls back into
//! the integrator. Weak residuals need every accepted step, so audit runs are
//! saved with `output_every = 1`.

use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::continuity::{advective_flux, grad_rho};
use crate::error::{Error, Result};
use crate::integrator::{energy_tolerance, Trajectory, TrajectoryRecord};
use crate::model::{pressure_unchecked, EnergyLedgerRow, FluidParams, ForcingSignal};
use crate::momentum::eps_momentum_exchange;

/// Spatial factor of a separable test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Spatial {
    /// `scale ((x - lo)(hi - x))^3 / (hi - lo)^6` on `[lo, hi]`, zero outside.
    Bump { lo: f64, hi: f64, scale: f64 },
    /// Constant in space; its wall value couples to the spring.
    Constant(f64),
}

/// `phi(t, x) = theta(t) chi(x)` with `theta(t) = (1 - (t/T)^2)^3` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub horizon: f64,
    pub spatial: Spatial,
}

impl TestFunction {
    pub fn bump(horizon: f64, lo: f64, hi: f64) -> Self {
        // scaled so that the peak value is 1
        Self {
            horizon,
            spatial: Spatial::Bump { lo, hi, scale: 64.0 },
        }
    }

    pub fn constant(horizon: f64) -> Self {
        Self {
            horizon,
            spatial: Spatial::Constant(1.0),
        }
    }

    pub fn theta(&self, t: f64) -> f64 {
        if t >= self.horizon {
            return 0.0;
        }
        let s = t / self.horizon;
        (1.0 - s * s).powi(3)
    }

    pub fn dtheta(&self, t: f64) -> f64 {
        if t >= self.horizon {
            return 0.0;
        }
        let s = t / self.horizon;
        -6.0 * s / self.horizon * (1.0 - s * s).powi(2)
    }

    pub fn chi(&self, x: f64) -> f64 {
        match self.spatial {
            Spatial::Constant(c) => c,
            Spatial::Bump { lo, hi, scale } => {
                if x <= lo || x >= hi {
                    0.0
                } else {
                    scale * ((x - lo) * (hi - x)).powi(3) / (hi - lo).powi(6)
                }
            }
        }
    }

    pub fn dchi(&self, x: f64) -> f64 {
        match self.spatial {
            Spatial::Constant(_) => 0.0,
            Spatial::Bump { lo, hi, scale } => {
                if x <= lo || x >= hi {
                    0.0
                } else {
                    let s = (x - lo) * (hi - x);
                    scale * 3.0 * s * s * (lo + hi - 2.0 * x) / (hi - lo).powi(6)
                }
            }
        }
    }

    /// Value on the walls, the weight of the spring term.
    pub fn wall_value(&self) -> f64 {
        match self.spatial {
            Spatial::Constant(c) => c,
            Spatial::Bump { .. } => 0.0,
        }
    }

    pub fn is_interior(&self) -> bool {
        matches!(self.spatial, Spatial::Bump { .. })
    }

    fn check(&self, traj: &Trajectory) -> Result<()> {
        let length = traj.params.length;
        if let Spatial::Bump { lo, hi, .. } = self.spatial {
            if !(lo >= 0.0 && hi <= length && lo < hi) {
                return Err(Error::Support(format!(
                    "bump support [{lo}, {hi}] is not inside [0, {length}]"
                )));
            }
        }
        let first = traj.records.first().map_or(f64::NAN, |r| r.state.t);
        let last = traj.records.last().map_or(f64::NAN, |r| r.state.t);
        if !(first == 0.0 && self.horizon > 0.0 && self.horizon <= last * (1.0 + 1e-12)) {
            return Err(Error::Support(format!(
                "time support [0, {}] is not covered by the trajectory [{first}, {last}]",
                self.horizon
            )));
        }
        if traj.output_every != 1 {
            return Err(Error::Support(format!(
                "weak residuals need every step (output_every = {})",
                traj.output_every
            )));
        }
        Ok(())
    }
}

/// Full-domain bump, two overlapping sub-interval bumps, and the constant.
pub fn test_family(length: f64, horizon: f64) -> Vec<TestFunction> {
    vec![
        TestFunction::bump(horizon, 0.0, length),
        TestFunction::bump(horizon, 0.125 * length, 0.625 * length),
        TestFunction::bump(horizon, 0.375 * length, 0.875 * length),
        TestFunction::constant(horizon),
    ]
}

/// How the time integral is discretized between stored levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TimeRule {
    /// Trapezoidal average of the two levels, `theta` at the midpoint.
    /// Carries an extra `-dt/2 int theta G' dt` relative to `Implicit`.
    Midpoint,
    /// New level only, `theta` at the old time. This matches the time levels of
    /// the backward Euler step, so what remains is spatial and modal error.
    #[default]
    Implicit,
}

/// Sign of the spring term in the momentum weak form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SpringSign {
    /// `- int b_phi k (b - f) dt`, consistent with the Newton law `-k (b - f) = T(L) - T(0)`.
    #[default]
    Derived,
    /// `+ int b_phi k (b - f) dt`.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakOptions {
    pub time_rule: TimeRule,
    pub spring_sign: SpringSign,
    /// Drop the spring term entirely (isolates the Newton coupling).
    pub include_spring: bool,
}

impl Default for WeakOptions {
    fn default() -> Self {
        Self {
            time_rule: TimeRule::Implicit,
            spring_sign: SpringSign::Derived,
            include_spring: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub continuity: f64,
    pub momentum: f64,
    pub dt: f64,
    pub dx: f64,
    pub n_modes: usize,
}

/// `log2(|coarse| / |fine|)` for a refinement by a factor of two.
pub fn empirical_order(coarse: f64, fine: f64) -> f64 {
    (coarse.abs() / fine.abs()).log2()
}

/// Spatial integrals of one stored level: the `phi_t` weight and the flux terms.
struct LevelIntegrals {
    density: f64,
    flux: f64,
}

fn cell_centers(basis: &Basis) -> impl Iterator<Item = (usize, f64)> + '_ {
    let dx = basis.dx();
    (0..basis.n_cells()).map(move |i| (i, (i as f64 + 0.5) * dx))
}

fn continuity_level(rec: &TrajectoryRecord, params: &FluidParams, basis: &Basis, phi: &TestFunction) -> LevelIntegrals {
    let dx = basis.dx();
    let rho = &rec.state.rho;
    let density = cell_centers(basis).map(|(i, x)| rho[i] * phi.chi(x)).sum::<f64>() * dx;
    let v_faces = basis.reconstruct_faces(&rec.state.v_coeffs);
    let adv = advective_flux(rho, &v_faces);
    let grad = grad_rho(rho, dx);
    let flux = (1..rho.len())
        .map(|f| (adv[f] - params.epsilon * grad[f]) * phi.dchi(f as f64 * dx))
        .sum::<f64>()
        * dx;
    LevelIntegrals { density, flux }
}

fn momentum_level(
    rec: &TrajectoryRecord,
    params: &FluidParams,
    forcing: &ForcingSignal,
    basis: &Basis,
    phi: &TestFunction,
    opts: &WeakOptions,
) -> Result<LevelIntegrals> {
    let dx = basis.dx();
    let s = &rec.state;
    let rho = &s.rho;
    let u = basis.reconstruct_augmented(&s.augmented());
    let dv = basis.derivative_cells(&s.v_coeffs);
    let visc = params.longitudinal_viscosity();

    let mut density = 0.0;
    let mut stress = 0.0;
    for (i, x) in cell_centers(basis) {
        density += rho[i] * u[i] * phi.chi(x);
        let t = visc * dv[i] - pressure_unchecked(rho[i], params);
        stress += t * phi.dchi(x);
    }

    let v_faces = basis.reconstruct_faces(&s.v_coeffs);
    let adv = advective_flux(rho, &v_faces);
    let grad = grad_rho(rho, dx);
    let mut convective = 0.0;
    let mut eps = 0.0;
    for f in 1..rho.len() {
        let x = f as f64 * dx;
        convective += adv[f] * 0.5 * (u[f - 1] + u[f]) * phi.dchi(x);
        // rho_x u_x dx = grad_f (u_f - u_{f-1})
        eps += grad[f] * (u[f] - u[f - 1]) * phi.chi(x);
    }

    let mut flux = (convective - stress) * dx - params.epsilon * eps;
    if opts.include_spring {
        let spring = phi.wall_value() * params.k_spring * (s.b - forcing.eval(s.t)?);
        match opts.spring_sign {
            SpringSign::Derived => flux -= spring,
            SpringSign::AsPrinted => flux += spring,
        }
    }
    Ok(LevelIntegrals {
        density: density * dx,
        flux,
    })
}

fn assemble_residual(
    traj: &Trajectory,
    phi: &TestFunction,
    rule: TimeRule,
    mut level: impl FnMut(&TrajectoryRecord) -> Result<LevelIntegrals>,
) -> Result<f64> {
    let records = &traj.records;
    let mut prev = level(&records[0])?;
    let mut total = prev.density * phi.theta(records[0].state.t);
    for w in records.windows(2) {
        let (t0, t1) = (w[0].state.t, w[1].state.t);
        if t0 >= phi.horizon {
            break;
        }
        let next = level(&w[1])?;
        let dtheta = phi.theta(t1) - phi.theta(t0);
        let dt = t1 - t0;
        total += match rule {
            TimeRule::Midpoint => {
                0.5 * (prev.density + next.density) * dtheta
                    + dt * phi.theta(0.5 * (t0 + t1)) * 0.5 * (prev.flux + next.flux)
            }
            TimeRule::Implicit => next.density * dtheta + dt * phi.theta(t0) * next.flux,
        };
        prev = next;
    }
    Ok(total)
}

/// `int int rho phi_t + (rho v - eps rho_x) phi_x dx dt + int rho_0 phi(0) dx`.
pub fn weak_continuity_residual(traj: &Trajectory, phi: &TestFunction, rule: TimeRule) -> Result<f64> {
    phi.check(traj)?;
    let params = &traj.params;
    let basis = Basis::new(params.length, params.n_modes, params.n_cells)?;
    assemble_residual(traj, phi, rule, |r| Ok(continuity_level(r, params, &basis, phi)))
}

/// `int int rho u phi_t + rho u v phi_x - T phi_x - eps rho_x u_x phi dx dt
///  + int (rho u)_0 phi(0) dx - int b_phi k (b - f) dt`.
pub fn weak_momentum_residual(traj: &Trajectory, phi: &TestFunction, opts: &WeakOptions) -> Result<f64> {
    phi.check(traj)?;
    let params = &traj.params;
    let basis = Basis::new(params.length, params.n_modes, params.n_cells)?;
    assemble_residual(traj, phi, opts.time_rule, |r| {
        momentum_level(r, params, &traj.forcing, &basis, phi, opts)
    })
}

/// `int theta b_phi k (b - f) dt` under the chosen time rule.
pub fn spring_integral(traj: &Trajectory, phi: &TestFunction, rule: TimeRule) -> Result<f64> {
    phi.check(traj)?;
    let k = traj.params.k_spring;
    let forcing = &traj.forcing;
    assemble_residual(traj, phi, rule, |r| {
        Ok(LevelIntegrals {
            density: 0.0,
            flux: phi.wall_value() * k * (r.state.b - forcing.eval(r.state.t)?),
        })
    })
}

pub fn residual_report(traj: &Trajectory, phi: &TestFunction, opts: &WeakOptions) -> Result<ResidualReport> {
    Ok(ResidualReport {
        continuity: weak_continuity_residual(traj, phi, opts.time_rule)?,
        momentum: weak_momentum_residual(traj, phi, opts)?,
        dt: traj.params.dt,
        dx: traj.params.dx(),
        n_modes: traj.params.n_modes,
    })
}

/// Offline recomputation of the energy inequality from ledger rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    /// `E' - E + dt (D' - W')` per step; the inequality asks for `<= tol`.
    pub defects: Vec<f64>,
    pub max_defect: f64,
    pub violations: usize,
    /// `E(T) - E(0) + sum dt D - sum dt W`.
    pub cumulative: f64,
    /// Sum of the per-step tolerances.
    pub cumulative_tol: f64,
    pub initial_energy: f64,
    pub total_dissipation: f64,
}

impl EnergyAudit {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.cumulative <= self.cumulative_tol
    }
}

/// Audit over `(t, row)` pairs in time order.
pub fn energy_audit_rows(rows: &[(f64, EnergyLedgerRow)]) -> EnergyAudit {
    let mut audit = EnergyAudit {
        defects: Vec::with_capacity(rows.len().saturating_sub(1)),
        max_defect: 0.0,
        violations: 0,
        cumulative: 0.0,
        cumulative_tol: 0.0,
        initial_energy: rows.first().map_or(0.0, |r| r.1.energy()),
        total_dissipation: 0.0,
    };
    let mut work = 0.0;
    for w in rows.windows(2) {
        let ((t0, a), (t1, b)) = (&w[0], &w[1]);
        let dt = t1 - t0;
        let defect = b.energy() - a.energy() + dt * (b.dissipation() - b.power_in);
        let tol = energy_tolerance(a.energy());
        if defect > tol {
            audit.violations += 1;
        }
        audit.max_defect = audit.max_defect.max(defect);
        audit.cumulative_tol += tol;
        audit.total_dissipation += dt * b.dissipation();
        work += dt * b.power_in;
        audit.defects.push(defect);
    }
    if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
        audit.cumulative = last.1.energy() - first.1.energy() + audit.total_dissipation - work;
    }
    audit
}

pub fn energy_audit(traj: &Trajectory) -> EnergyAudit {
    let rows: Vec<(f64, EnergyLedgerRow)> = traj.records.iter().map(|r| (r.state.t, r.ledger)).collect();
    energy_audit_rows(&rows)
}

/// `int rho log rho` and the defect of its balance
/// `d/dt int rho log rho + int rho v_x + eps int rho_x^2 / rho`.
///
/// For the implicit transport step the defect is minus the convexity gap of
/// `rho log rho` over the step divided by `dt`, so it is `<= 0` and first order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySeries {
    pub t: Vec<f64>,
    pub entropy: Vec<f64>,
    /// One entry per step, evaluated at the new level.
    pub defect: Vec<f64>,
    pub max_abs_defect: f64,
}

fn log_mean(a: f64, b: f64) -> f64 {
    if (a - b).abs() <= 1e-9 * a.max(b) {
        0.5 * (a + b)
    } else {
        (a - b) / (a.ln() - b.ln())
    }
}

pub fn entropy_monitor(traj: &Trajectory) -> Result<EntropySeries> {
    let params = &traj.params;
    let basis = Basis::new(params.length, params.n_modes, params.n_cells)?;
    let dx = basis.dx();
    let mut out = EntropySeries {
        t: Vec::with_capacity(traj.records.len()),
        entropy: Vec::with_capacity(traj.records.len()),
        defect: Vec::new(),
        max_abs_defect: 0.0,
    };
    for (n, rec) in traj.records.iter().enumerate() {
        let rho = &rec.state.rho;
        rec.state.check_density()?;
        let s = rho.iter().map(|r| r * r.ln()).sum::<f64>() * dx;
        if n > 0 {
            let dt = rec.state.t - out.t[n - 1];
            // int rho v_x = -int v rho_x, written with the upwind face flux and
            // log differences so the balance mirrors the transport step
            let v_faces = basis.reconstruct_faces(&rec.state.v_coeffs);
            let adv = advective_flux(rho, &v_faces);
            let grad = grad_rho(rho, dx);
            let mut compression = 0.0;
            let mut fisher = 0.0;
            for f in 1..rho.len() {
                compression -= adv[f] * (rho[f].ln() - rho[f - 1].ln());
                fisher += grad[f] * grad[f] / log_mean(rho[f - 1], rho[f]) * dx;
            }
            let d = (s - out.entropy[n - 1]) / dt + compression + params.epsilon * fisher;
            out.max_abs_defect = out.max_abs_defect.max(d.abs());
            out.defect.push(d);
        }
        out.t.push(rec.state.t);
        out.entropy.push(s);
    }
    Ok(out)
}

/// Per-step residual of the global momentum law
/// `d/dt int rho u = -k (b - f) - eps int rho_x u_x` with the right side at the old level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumLaw {
    pub residuals: Vec<f64>,
    /// `max |r_n| / dt_n^2`.
    pub c_max: f64,
    /// `sum |r_n|`, first order in dt.
    pub integrated: f64,
    /// Same balance with the right side at the new level; roundoff for the scheme.
    pub max_implicit: f64,
}

pub fn momentum_law(traj: &Trajectory) -> Result<MomentumLaw> {
    let params = &traj.params;
    let basis = Basis::new(params.length, params.n_modes, params.n_cells)?;
    let dx = basis.dx();
    let source = |rec: &TrajectoryRecord| -> Result<f64> {
        let s = &rec.state;
        let u = basis.reconstruct_augmented(&s.augmented());
        Ok(params.k_spring * (s.b - traj.forcing.eval(s.t)?)
            + params.epsilon * eps_momentum_exchange(&s.rho, &u, dx))
    };
    let mut law = MomentumLaw {
        residuals: Vec::with_capacity(traj.records.len()),
        c_max: 0.0,
        integrated: 0.0,
        max_implicit: 0.0,
    };
    let mut prev_source = source(&traj.records[0])?;
    for w in traj.records.windows(2) {
        let dt = w[1].state.t - w[0].state.t;
        let dp = w[1].ledger.total_momentum - w[0].ledger.total_momentum;
        let next_source = source(&w[1])?;
        let r = dp + dt * prev_source;
        law.residuals.push(r);
        law.c_max = law.c_max.max(r.abs() / (dt * dt));
        law.integrated += r.abs();
        law.max_implicit = law.max_implicit.max((dp + dt * next_source).abs());
        prev_source = next_source;
    }
    Ok(law)
}
