//! Parameters, state and constitutive laws shared by every other module.
//!
//! The fluid occupies the slab `[0, L]` in the container frame. Density lives
//! on `n_cells` uniform cells, the relative velocity `v = u - beta` lives in the
//! span of the first `n_modes` Laplace-Dirichlet eigenfunctions, and the
//! container carries displacement `b` and velocity `beta`.

use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::continuity::grad_rho;
use crate::error::{Error, Result};

/// Physical constants, approximation constants and discretization sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidParams {
    /// Shear viscosity.
    pub mu: f64,
    /// Second viscosity.
    pub lambda: f64,
    /// Pressure coefficient in `a rho^gamma`.
    pub a: f64,
    /// Adiabatic exponent.
    pub gamma: f64,
    pub k_spring: f64,
    /// Artificial viscosity in the continuity equation.
    pub epsilon: f64,
    /// Artificial pressure coefficient in `delta rho^8`.
    pub delta: f64,
    /// Domain length `L`.
    pub length: f64,
    pub n_modes: usize,
    pub n_cells: usize,
    pub dt: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl FluidParams {
    /// The reference configuration used throughout the test-suite.
    pub fn reference() -> Self {
        Self {
            mu: 1.0,
            lambda: 0.0,
            a: 1.0,
            gamma: 2.0,
            k_spring: 1.0,
            epsilon: 1e-3,
            delta: 1e-4,
            length: 1.0,
            n_modes: 16,
            n_cells: 256,
            dt: 1e-4,
            fp_tol: 1e-12,
            fp_max_iter: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParams(msg));
        let finite = [
            ("mu", self.mu),
            ("lambda", self.lambda),
            ("a", self.a),
            ("gamma", self.gamma),
            ("k_spring", self.k_spring),
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("length", self.length),
            ("dt", self.dt),
            ("fp_tol", self.fp_tol),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return fail(format!("{name} must be finite (got {value})"));
            }
        }
        if self.mu <= 0.0 {
            return fail(format!("mu must be > 0 (got {})", self.mu));
        }
        if self.lambda + 2.0 / 3.0 * self.mu <= 0.0 {
            return fail(format!(
                "lambda + 2/3 mu must be > 0 (got {})",
                self.lambda + 2.0 / 3.0 * self.mu
            ));
        }
        if self.gamma <= 1.0 {
            return fail(format!("gamma must be > 1 (got {})", self.gamma));
        }
        if self.a < 0.0 {
            return fail(format!("a must be >= 0 (got {})", self.a));
        }
        if self.epsilon < 0.0 {
            return fail(format!("epsilon must be >= 0 (got {})", self.epsilon));
        }
        if self.delta < 0.0 {
            return fail(format!("delta must be >= 0 (got {})", self.delta));
        }
        if self.length <= 0.0 {
            return fail(format!("length must be > 0 (got {})", self.length));
        }
        if self.k_spring <= 0.0 {
            return fail(format!("k_spring must be > 0 (got {})", self.k_spring));
        }
        if self.dt <= 0.0 {
            return fail(format!("dt must be > 0 (got {})", self.dt));
        }
        if self.fp_tol <= 0.0 {
            return fail(format!("fp_tol must be > 0 (got {})", self.fp_tol));
        }
        if self.n_modes < 1 {
            return fail("n_modes must be >= 1".into());
        }
        if self.n_cells < 2 {
            return fail("n_cells must be >= 2".into());
        }
        if self.n_cells < 4 * self.n_modes {
            return fail(format!(
                "n_cells must be >= 4 n_modes (got n_cells = {}, n_modes = {})",
                self.n_cells, self.n_modes
            ));
        }
        if self.fp_max_iter < 1 {
            return fail("fp_max_iter must be >= 1".into());
        }
        Ok(())
    }

    /// True when the exponent is in the range covered by the existence theory.
    pub fn in_existence_regime(&self) -> bool {
        self.gamma > 1.5
    }

    /// Longitudinal viscosity `lambda + 2 mu` of the slab.
    pub fn longitudinal_viscosity(&self) -> f64 {
        self.lambda + 2.0 * self.mu
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }
}

/// One time slice of the coupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub t: f64,
    /// Density at cell centers.
    pub rho: Vec<f64>,
    /// Coefficients of `v` in the Dirichlet eigenbasis (mode 1 first).
    pub v_coeffs: Vec<f64>,
    /// Container displacement.
    pub b: f64,
    /// Container velocity.
    pub beta: f64,
}

impl FluidState {
    pub fn new(t: f64, rho: Vec<f64>, v_coeffs: Vec<f64>, b: f64, beta: f64) -> Result<Self> {
        let state = Self {
            t,
            rho,
            v_coeffs,
            b,
            beta,
        };
        state.check_density()?;
        Ok(state)
    }

    /// Fluid at rest relative to the container with uniform density.
    pub fn uniform(params: &FluidParams, rho0: f64, b: f64, beta: f64) -> Result<Self> {
        Self::new(
            0.0,
            vec![rho0; params.n_cells],
            vec![0.0; params.n_modes],
            b,
            beta,
        )
    }

    /// Density `mean + amplitude cos(mode pi x / L)` sampled at cell centers.
    pub fn cosine_profile(
        params: &FluidParams,
        mean: f64,
        amplitude: f64,
        mode: usize,
    ) -> Vec<f64> {
        let dx = params.dx();
        let k = mode as f64 * std::f64::consts::PI / params.length;
        (0..params.n_cells)
            .map(|i| mean + amplitude * (k * (i as f64 + 0.5) * dx).cos())
            .collect()
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_rho(&self) -> f64 {
        self.rho.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check_density(&self) -> Result<()> {
        let min = self.min_rho();
        if !(min > 0.0) || self.rho.iter().any(|r| !r.is_finite()) {
            return Err(Error::SingularDensity { min });
        }
        Ok(())
    }

    /// Augmented coefficient vector `(beta, c_1, .., c_n)`.
    pub fn augmented(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.v_coeffs.len() + 1);
        out.push(self.beta);
        out.extend_from_slice(&self.v_coeffs);
        out
    }
}

/// Prescribed position of the spring anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ForcingSignal {
    Zero,
    /// `amplitude sin(omega t + phase)`
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise cubic Hermite interpolation of samples (C1 in time).
    Sampled { times: Vec<f64>, values: Vec<f64> },
}

impl ForcingSignal {
    pub fn sinusoid(amplitude: f64, omega: f64) -> Self {
        ForcingSignal::Sinusoid {
            amplitude,
            omega,
            phase: 0.0,
        }
    }

    pub fn sampled(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let signal = ForcingSignal::Sampled { times, values };
        signal.validate()?;
        Ok(signal)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ForcingSignal::Zero => Ok(()),
            ForcingSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                if [amplitude, omega, phase].iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::InvalidParams("sinusoid forcing must be finite".into()))
                }
            }
            ForcingSignal::Sampled { times, values } => {
                if times.len() != values.len() {
                    return Err(Error::InvalidParams(format!(
                        "sampled forcing: {} times but {} values",
                        times.len(),
                        values.len()
                    )));
                }
                if times.len() < 2 {
                    return Err(Error::InvalidParams(
                        "sampled forcing needs at least two samples".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidParams(
                        "sampled forcing times must be strictly increasing".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Anchor position `f(t)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            ForcingSignal::Zero => Ok(0.0),
            ForcingSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => Ok(amplitude * (omega * t + phase).sin()),
            ForcingSignal::Sampled { times, values } => {
                let (seg, s, h) = locate(times, t)?;
                let (m0, m1) = (hermite_slope(times, values, seg), hermite_slope(times, values, seg + 1));
                let (h00, h10, h01, h11) = (
                    2.0 * s.powi(3) - 3.0 * s * s + 1.0,
                    s.powi(3) - 2.0 * s * s + s,
                    -2.0 * s.powi(3) + 3.0 * s * s,
                    s.powi(3) - s * s,
                );
                Ok(h00 * values[seg] + h10 * h * m0 + h01 * values[seg + 1] + h11 * h * m1)
            }
        }
    }

    /// Anchor velocity `f'(t)`.
    pub fn rate(&self, t: f64) -> Result<f64> {
        match self {
            ForcingSignal::Zero => Ok(0.0),
            ForcingSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => Ok(amplitude * omega * (omega * t + phase).cos()),
            ForcingSignal::Sampled { times, values } => {
                let (seg, s, h) = locate(times, t)?;
                let (m0, m1) = (hermite_slope(times, values, seg), hermite_slope(times, values, seg + 1));
                let d00 = (6.0 * s * s - 6.0 * s) / h;
                let d10 = 3.0 * s * s - 4.0 * s + 1.0;
                let d01 = (-6.0 * s * s + 6.0 * s) / h;
                let d11 = 3.0 * s * s - 2.0 * s;
                Ok(d00 * values[seg] + d10 * m0 + d01 * values[seg + 1] + d11 * m1)
            }
        }
    }
}

fn locate(times: &[f64], t: f64) -> Result<(usize, f64, f64)> {
    let (start, end) = (times[0], times[times.len() - 1]);
    if !(t >= start && t <= end) {
        return Err(Error::ForcingRange { t, start, end });
    }
    let seg = match times.partition_point(|&x| x <= t) {
        0 => 0,
        p => (p - 1).min(times.len() - 2),
    };
    let h = times[seg + 1] - times[seg];
    Ok((seg, (t - times[seg]) / h, h))
}

// Finite-difference slopes; one-sided at the ends.
fn hermite_slope(times: &[f64], values: &[f64], i: usize) -> f64 {
    let n = times.len();
    if i == 0 {
        (values[1] - values[0]) / (times[1] - times[0])
    } else if i == n - 1 {
        (values[n - 1] - values[n - 2]) / (times[n - 1] - times[n - 2])
    } else {
        (values[i + 1] - values[i - 1]) / (times[i + 1] - times[i - 1])
    }
}

/// Every term of the energy balance evaluated on one state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedgerRow {
    pub t: f64,
    pub kinetic: f64,
    pub pressure_potential: f64,
    pub artificial_potential: f64,
    pub spring: f64,
    pub dissipation_visc: f64,
    pub dissipation_eps: f64,
    pub power_in: f64,
    pub mass: f64,
    pub total_momentum: f64,
}

impl EnergyLedgerRow {
    /// Stored mechanical energy: kinetic + potentials + spring.
    pub fn energy(&self) -> f64 {
        self.kinetic + self.pressure_potential + self.artificial_potential + self.spring
    }

    pub fn dissipation(&self) -> f64 {
        self.dissipation_visc + self.dissipation_eps
    }
}

/// Barotropic pressure `a rho^gamma + delta rho^8`.
pub fn pressure(rho: f64, params: &FluidParams) -> Result<f64> {
    if rho < 0.0 {
        return Err(Error::NegativeDensity(rho));
    }
    Ok(pressure_unchecked(rho, params))
}

#[inline]
pub(crate) fn pressure_unchecked(rho: f64, params: &FluidParams) -> f64 {
    params.a * rho.powf(params.gamma) + params.delta * rho.powi(8)
}

/// Total 1D stress `(lambda + 2 mu) v_x - p(rho)`.
pub fn stress_1d(dv_dx: f64, rho: f64, params: &FluidParams) -> Result<f64> {
    Ok(params.longitudinal_viscosity() * dv_dx - pressure(rho, params)?)
}

/// Pressure potential `a/(gamma-1) rho^gamma`.
#[inline]
pub fn gamma_potential(rho: f64, params: &FluidParams) -> f64 {
    params.a / (params.gamma - 1.0) * rho.powf(params.gamma)
}

/// Artificial potential `delta/7 rho^8`.
#[inline]
pub fn artificial_potential(rho: f64, params: &FluidParams) -> f64 {
    params.delta / 7.0 * rho.powi(8)
}

/// Derivative of the total potential: `a gamma/(gamma-1) rho^(gamma-1) + 8 delta/7 rho^7`.
#[inline]
pub fn potential_slope(rho: f64, params: &FluidParams) -> f64 {
    params.a * params.gamma / (params.gamma - 1.0) * rho.powf(params.gamma - 1.0)
        + 8.0 * params.delta / 7.0 * rho.powi(7)
}

/// Second derivative of the total potential: `a gamma rho^(gamma-2) + 8 delta rho^6`.
#[inline]
pub fn potential_curvature(rho: f64, params: &FluidParams) -> f64 {
    params.a * params.gamma * rho.powf(params.gamma - 2.0) + 8.0 * params.delta * rho.powi(6)
}

/// Secant curvature between neighbouring cells,
/// `(P'(r1) - P'(r0)) / (r1 - r0)` with `P` the total potential.
///
/// This is the face weight used for the epsilon dissipation; the continuity
/// scheme dissipates exactly this quantity.
pub fn secant_curvature(r0: f64, r1: f64, params: &FluidParams) -> f64 {
    let diff = r1 - r0;
    if diff.abs() <= 1e-7 * r0.abs().max(r1.abs()) {
        potential_curvature(0.5 * (r0 + r1), params)
    } else {
        (potential_slope(r1, params) - potential_slope(r0, params)) / diff
    }
}

/// Evaluates every ledger term on `state` by midpoint quadrature over the cells.
pub fn energy_row(
    state: &FluidState,
    params: &FluidParams,
    forcing: &ForcingSignal,
    basis: &Basis,
) -> Result<EnergyLedgerRow> {
    let dx = basis.dx();
    let v = basis.reconstruct_cells(&state.v_coeffs);
    let dv = basis.derivative_cells(&state.v_coeffs);

    let mut row = EnergyLedgerRow {
        t: state.t,
        ..Default::default()
    };
    for (i, &rho) in state.rho.iter().enumerate() {
        let u = state.beta + v[i];
        row.kinetic += 0.5 * rho * u * u;
        row.pressure_potential += gamma_potential(rho, params);
        row.artificial_potential += artificial_potential(rho, params);
        row.dissipation_visc += dv[i] * dv[i];
        row.mass += rho;
        row.total_momentum += rho * u;
    }
    row.kinetic *= dx;
    row.pressure_potential *= dx;
    row.artificial_potential *= dx;
    row.dissipation_visc *= params.longitudinal_viscosity() * dx;
    row.mass *= dx;
    row.total_momentum *= dx;

    if params.epsilon > 0.0 {
        let grad = grad_rho(&state.rho, dx);
        let mut eps = 0.0;
        for f in 1..state.rho.len() {
            let w = secant_curvature(state.rho[f - 1], state.rho[f], params);
            eps += w * grad[f] * grad[f];
        }
        row.dissipation_eps = params.epsilon * eps * dx;
    }

    row.spring = 0.5 * params.k_spring * state.b * state.b;
    row.power_in = params.k_spring * state.beta * forcing.eval(state.t)?;
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_params() -> FluidParams {
        FluidParams {
            a: 1.0,
            gamma: 2.0,
            delta: 0.0,
            ..FluidParams::reference()
        }
    }

    #[test]
    fn pressure_examples() {
        let p = unit_params();
        assert_eq!(pressure(0.0, &p).unwrap(), 0.0);
        assert_eq!(pressure(1.0, &p).unwrap(), 1.0);
        let p2 = FluidParams {
            a: 1.0,
            gamma: 1.5,
            delta: 0.01,
            ..p.clone()
        };
        // 2^1.5 + 0.01 * 2^8, evaluated independently with mpmath at 30 digits.
        let expected = 5.388_427_124_746_190_1;
        assert!((pressure(2.0, &p2).unwrap() - expected).abs() < 1e-14);
        assert_eq!(pressure(-0.1, &p), Err(Error::NegativeDensity(-0.1)));
    }

    #[test]
    fn stress_examples() {
        let p = unit_params();
        assert_eq!(stress_1d(0.0, 1.0, &p).unwrap(), -1.0);
        let p_vac = FluidParams {
            mu: 1.0,
            lambda: 0.0,
            ..p.clone()
        };
        assert_eq!(stress_1d(1.0, 0.0, &p_vac).unwrap(), 2.0);
        let p3 = FluidParams {
            mu: 1.0,
            lambda: 1.0,
            ..p.clone()
        };
        assert!((stress_1d(0.5, 1.0, &p3).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validation_names_the_violated_invariant() {
        let mut p = FluidParams::reference();
        p.gamma = 0.5;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("gamma"), "{err}");

        let mut p = FluidParams::reference();
        p.mu = 1.0;
        p.lambda = -0.7;
        assert!(p.validate().unwrap_err().to_string().contains("lambda + 2/3 mu"));

        let mut p = FluidParams::reference();
        p.n_cells = 32;
        assert!(p.validate().unwrap_err().to_string().contains("n_cells"));
    }

    #[test]
    fn existence_regime_flag() {
        let mut p = FluidParams::reference();
        p.gamma = 1.5;
        assert!(!p.in_existence_regime());
        p.gamma = 1.5000001;
        assert!(p.in_existence_regime());
    }

    #[test]
    fn curvature_is_derivative_of_slope() {
        let p = FluidParams {
            a: 1.3,
            gamma: 1.7,
            delta: 0.02,
            ..FluidParams::reference()
        };
        for &r in &[0.3, 1.0, 2.2] {
            let h = 1e-5;
            let fd = (potential_slope(r + h, &p) - potential_slope(r - h, &p)) / (2.0 * h);
            assert!((fd - potential_curvature(r, &p)).abs() < 1e-7 * fd.abs());
            // rho P'(rho) - P(rho) = p(rho)
            let lhs = r * potential_slope(r, &p) - gamma_potential(r, &p) - artificial_potential(r, &p);
            assert!((lhs - pressure(r, &p).unwrap()).abs() < 1e-12);
        }
        let s = secant_curvature(1.0, 1.0 + 1e-12, &p);
        assert!((s - potential_curvature(1.0, &p)).abs() < 1e-9);
    }

    #[test]
    fn sampled_forcing_is_c1_and_range_checked() {
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let values: Vec<f64> = times.iter().map(|t| t * t).collect();
        let f = ForcingSignal::sampled(times, values).unwrap();
        assert!((f.eval(0.55).unwrap() - 0.3025).abs() < 1e-3);
        // continuity of the derivative across a knot
        let left = f.rate(0.5 - 1e-12).unwrap();
        let right = f.rate(0.5 + 1e-12).unwrap();
        assert!((left - right).abs() < 1e-8);
        assert!(matches!(f.eval(2.5), Err(Error::ForcingRange { .. })));
        assert!(ForcingSignal::sampled(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
    }
}
