//! Rigid-body limit: `M b'' + k b = k f(t)`.
//!
//! Closed forms for sinusoidal anchors (including the secular resonant case),
//! a classical RK4 integrator for any anchor, and a few fits used to compare
//! against the fluid runs.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{half_cycle_peaks, linear_fit, log_decay_rate, LineFit};
use crate::model::ForcingSignal;

/// Relative tolerance on `|omega^2 - k/M|` below which the forcing is resonant.
pub const RESONANCE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidParams {
    pub k_spring: f64,
    /// Total mass of the rigid body.
    pub mass: f64,
    pub forcing: ForcingSignal,
    pub b0: f64,
    pub bdot0: f64,
}

impl RigidParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_spring > 0.0) {
            return Err(Error::InvalidParams("k_spring must be > 0".into()));
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParams("mass must be > 0".into()));
        }
        self.forcing.validate()
    }

    /// Natural frequency `sqrt(k/M)`.
    pub fn natural_frequency(&self) -> f64 {
        (self.k_spring / self.mass).sqrt()
    }

    pub fn is_resonant(&self) -> bool {
        match self.forcing {
            ForcingSignal::Sinusoid { omega, amplitude, .. } => {
                let w2 = self.k_spring / self.mass;
                amplitude != 0.0 && (omega * omega - w2).abs() <= RESONANCE_TOL * w2
            }
            _ => false,
        }
    }

    /// Mechanical energy `M bdot^2/2 + k b^2/2`.
    pub fn energy(&self, b: f64, bdot: f64) -> f64 {
        0.5 * self.mass * bdot * bdot + 0.5 * self.k_spring * b * b
    }

    /// The rigid model has no damping term, so its free decay rate is zero.
    pub fn decay_rate(&self) -> f64 {
        0.0
    }

    /// Coefficients of the particular solution and of the homogeneous part
    /// `c1 cos(W t) + c2 sin(W t)` fitted to the initial data.
    pub fn closed_form(&self) -> Result<ClosedForm> {
        self.validate()?;
        let w = self.natural_frequency();
        let (amplitude, omega, phase) = match self.forcing {
            ForcingSignal::Zero => (0.0, 0.0, 0.0),
            ForcingSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => (amplitude, omega, phase),
            ForcingSignal::Sampled { .. } => {
                return Err(Error::Config(
                    "closed form needs a sinusoidal or zero anchor".into(),
                ))
            }
        };
        let particular = if amplitude == 0.0 {
            Particular::None
        } else if self.is_resonant() {
            Particular::Secular {
                coeff: -0.5 * amplitude * w,
                phase,
            }
        } else {
            Particular::Steady {
                amplitude: amplitude * self.k_spring / (self.k_spring - self.mass * omega * omega),
                omega,
                phase,
            }
        };
        let (p0, pdot0) = particular.eval(0.0, w);
        Ok(ClosedForm {
            w,
            c1: self.b0 - p0,
            c2: (self.bdot0 - pdot0) / w,
            particular,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Particular {
    None,
    /// `amplitude sin(omega t + phase)`
    Steady { amplitude: f64, omega: f64, phase: f64 },
    /// `coeff t cos(W t + phase)`
    Secular { coeff: f64, phase: f64 },
}

impl Particular {
    fn eval(&self, t: f64, w: f64) -> (f64, f64) {
        match *self {
            Particular::None => (0.0, 0.0),
            Particular::Steady {
                amplitude,
                omega,
                phase,
            } => {
                let arg = omega * t + phase;
                (amplitude * arg.sin(), amplitude * omega * arg.cos())
            }
            Particular::Secular { coeff, phase } => {
                let arg = w * t + phase;
                (
                    coeff * t * arg.cos(),
                    coeff * arg.cos() - coeff * w * t * arg.sin(),
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub w: f64,
    pub c1: f64,
    pub c2: f64,
    pub particular: Particular,
}

impl ClosedForm {
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let (s, c) = (self.w * t).sin_cos();
        let (p, pd) = self.particular.eval(t, self.w);
        (
            self.c1 * c + self.c2 * s + p,
            -self.c1 * self.w * s + self.c2 * self.w * c + pd,
        )
    }

    /// `|c1| + |c2| + |steady amplitude|`, a bound on `|b|` off resonance.
    pub fn bound(&self) -> f64 {
        let p = match self.particular {
            Particular::Steady { amplitude, .. } => amplitude.abs(),
            Particular::None => 0.0,
            Particular::Secular { .. } => f64::INFINITY,
        };
        self.c1.abs() + self.c2.abs() + p
    }
}

/// `(b, bdot)` at time `t` from the closed form.
pub fn rigid_closed_form(t: f64, params: &RigidParams) -> Result<(f64, f64)> {
    Ok(params.closed_form()?.eval(t))
}

/// Uniformly sampled solution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RigidSamples {
    pub t: Vec<f64>,
    pub b: Vec<f64>,
    pub bdot: Vec<f64>,
}

/// Classical fourth-order Runge-Kutta on `(b, bdot)`.
pub fn rigid_ode(params: &RigidParams, t_end: f64, dt: f64) -> Result<RigidSamples> {
    params.validate()?;
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidParams("dt must be > 0 and t_end >= 0".into()));
    }
    let w2 = params.k_spring / params.mass;
    let rhs = |t: f64, b: f64, bd: f64| -> Result<(f64, f64)> {
        Ok((bd, -w2 * (b - params.forcing.eval(t)?)))
    };
    let steps = (t_end / dt).round() as usize;
    let mut out = RigidSamples {
        t: Vec::with_capacity(steps + 1),
        b: Vec::with_capacity(steps + 1),
        bdot: Vec::with_capacity(steps + 1),
    };
    let (mut b, mut bd) = (params.b0, params.bdot0);
    out.t.push(0.0);
    out.b.push(b);
    out.bdot.push(bd);
    for n in 0..steps {
        let t = n as f64 * dt;
        let h = dt;
        let k1 = rhs(t, b, bd)?;
        let k2 = rhs(t + 0.5 * h, b + 0.5 * h * k1.0, bd + 0.5 * h * k1.1)?;
        let k3 = rhs(t + 0.5 * h, b + 0.5 * h * k2.0, bd + 0.5 * h * k2.1)?;
        let k4 = rhs(t + h, b + h * k3.0, bd + h * k3.1)?;
        b += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        bd += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        out.t.push((n + 1) as f64 * dt);
        out.b.push(b);
        out.bdot.push(bd);
    }
    Ok(out)
}

/// Amplitude of `sin(omega t)` in a least-squares fit of `b` on
/// `{sin omega t, cos omega t, sin W t, cos W t}`.
///
/// Separates the steady forced response from the free oscillation.
pub fn steady_amplitude(t: &[f64], b: &[f64], omega: f64, w: f64) -> Result<f64> {
    if (omega - w).abs() <= RESONANCE_TOL * w {
        return Err(Error::Config("steady amplitude is undefined at resonance".into()));
    }
    let n = t.len().min(b.len());
    let design = DMatrix::from_fn(n, 4, |i, j| match j {
        0 => (omega * t[i]).sin(),
        1 => (omega * t[i]).cos(),
        2 => (w * t[i]).sin(),
        _ => (w * t[i]).cos(),
    });
    let y = DVector::from_column_slice(&b[..n]);
    let coeffs = design
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(coeffs[0])
}

/// Linear fit of the half-cycle peaks of `|b|` against their times.
pub fn envelope_fit(t: &[f64], b: &[f64]) -> Option<LineFit> {
    let peaks = half_cycle_peaks(t, b, true);
    let (x, y): (Vec<f64>, Vec<f64>) = peaks.into_iter().unzip();
    linear_fit(&x, &y)
}

/// `sqrt(b^2 + bdot^2 / W^2)`, constant along free undamped motion.
pub fn amplitude_envelope(b: &[f64], bdot: &[f64], w: f64) -> Vec<f64> {
    b.iter()
        .zip(bdot)
        .map(|(b, bd)| (b * b + bd * bd / (w * w)).sqrt())
        .collect()
}

/// Decay rate fitted to the amplitude envelope; zero for an undamped trace.
pub fn envelope_decay_rate(t: &[f64], b: &[f64], bdot: &[f64], w: f64) -> Option<f64> {
    let env = amplitude_envelope(b, bdot, w);
    let points: Vec<(f64, f64)> = t.iter().copied().zip(env).collect();
    log_decay_rate(&points)
}
