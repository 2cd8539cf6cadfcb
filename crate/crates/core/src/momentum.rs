//! Galerkin momentum balance tested against `{1} + {psi_j}`.
//!
//! The sine modes carry the fluid momentum in the container frame; the
//! constant mode carries the container velocity and receives the spring force.
//! Every force is written so that pairing it with the augmented velocity
//! reproduces a term of the energy balance exactly on the grid:
//!
//! * pressure uses face differences of the basis, pairing with the upwind
//!   continuity flux through the potential slope;
//! * convection uses the advective mass flux of the continuity step times the
//!   face-averaged velocity;
//! * the epsilon coupling uses face gradients of density and velocity.

use nalgebra::DMatrix;

use crate::basis::{assemble_mass, Basis, MassOperator};
use crate::continuity::{advective_flux, grad_rho};
use crate::error::Result;
use crate::model::{pressure_unchecked, FluidParams, FluidState, ForcingSignal};

/// Viscous stiffness `K[a][b] = int e_a' e_b'` (zero row and column for the constant mode).
pub fn viscous_matrix(basis: &Basis) -> DMatrix<f64> {
    let w = basis.width();
    let dx = basis.dx();
    let mut k = DMatrix::<f64>::zeros(w, w);
    for i in 0..basis.n_cells() {
        let d = basis.dcell_row(i);
        for a in 1..w {
            for b in a..w {
                k[(a, b)] += d[a] * d[b];
            }
        }
    }
    for a in 1..w {
        for b in a..w {
            let value = k[(a, b)] * dx;
            k[(a, b)] = value;
            k[(b, a)] = value;
        }
    }
    k
}

/// `-(lambda + 2 mu) int v' e_a'`
pub fn viscous_force(v_coeffs: &[f64], params: &FluidParams, basis: &Basis) -> Vec<f64> {
    let w = basis.width();
    let dv = basis.derivative_cells(v_coeffs);
    let mut out = vec![0.0; w];
    for (i, dvi) in dv.iter().enumerate() {
        let d = basis.dcell_row(i);
        for a in 1..w {
            out[a] += dvi * d[a];
        }
    }
    let scale = -params.longitudinal_viscosity() * basis.dx();
    out.iter_mut().for_each(|x| *x *= scale);
    out
}

/// `int p(rho) e_a'` with `e_a'` replaced by the face difference over each cell.
///
/// Summed by parts over interior faces, `-sum_f (p_f - p_{f-1}) e_a(x_f)`, which
/// is identical since `e_a` vanishes on the walls and exact for uniform pressure.
pub fn pressure_force(rho: &[f64], params: &FluidParams, basis: &Basis) -> Vec<f64> {
    let w = basis.width();
    let mut out = vec![0.0; w];
    let mut prev = pressure_unchecked(rho[0], params);
    for f in 1..rho.len() {
        let p = pressure_unchecked(rho[f], params);
        let jump = p - prev;
        prev = p;
        if jump == 0.0 {
            continue;
        }
        let face = basis.face_row(f);
        for a in 1..w {
            out[a] -= jump * face[a];
        }
    }
    out
}

/// `int rho u v e_a'` with the mass flux `flux` on faces and `u` at cell centers.
pub fn convective_force(flux: &[f64], u: &[f64], basis: &Basis) -> Vec<f64> {
    let w = basis.width();
    let mut out = vec![0.0; w];
    for f in 1..u.len() {
        let g = flux[f] * 0.5 * (u[f - 1] + u[f]);
        if g == 0.0 {
            continue;
        }
        let (left, right) = (basis.cell_row(f - 1), basis.cell_row(f));
        for a in 1..w {
            out[a] += g * (right[a] - left[a]);
        }
    }
    out
}

/// `-eps int rho' u' e_a` on faces.
pub fn eps_force(rho: &[f64], u: &[f64], epsilon: f64, basis: &Basis) -> Vec<f64> {
    let w = basis.width();
    let mut out = vec![0.0; w];
    if epsilon == 0.0 {
        return out;
    }
    let grad = grad_rho(rho, basis.dx());
    for f in 1..u.len() {
        // (rho'_f)(u'_f) dx = grad_f (u_f - u_{f-1})
        let g = grad[f] * (u[f] - u[f - 1]);
        if g == 0.0 {
            continue;
        }
        let (left, right) = (basis.cell_row(f - 1), basis.cell_row(f));
        for a in 0..w {
            out[a] -= epsilon * g * 0.5 * (left[a] + right[a]);
        }
    }
    out
}

/// `int rho' u' dx` on faces; the constant-mode share of the epsilon coupling is
/// `-eps` times this.
pub fn eps_momentum_exchange(rho: &[f64], u: &[f64], dx: f64) -> f64 {
    let grad = grad_rho(rho, dx);
    (1..u.len()).map(|f| grad[f] * (u[f] - u[f - 1])).sum()
}

/// Mass operator at the current density together with the force vector.
#[derive(Debug, Clone)]
pub struct MomentumAssembly {
    pub mass: MassOperator,
    pub rhs: Vec<f64>,
}

/// Evaluates all five force groups at one state.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    rho: &[f64],
    v_coeffs: &[f64],
    beta: f64,
    b: f64,
    t: f64,
    params: &FluidParams,
    forcing: &ForcingSignal,
    basis: &Basis,
) -> Result<MomentumAssembly> {
    let mass = assemble_mass(rho, basis)?;
    let mut aug = Vec::with_capacity(basis.width());
    aug.push(beta);
    aug.extend_from_slice(v_coeffs);
    let u = basis.reconstruct_augmented(&aug);
    let v_faces = basis.reconstruct_faces(v_coeffs);
    let flux = advective_flux(rho, &v_faces);

    let mut rhs = viscous_force(v_coeffs, params, basis);
    let groups = [
        pressure_force(rho, params, basis),
        convective_force(&flux, &u, basis),
        eps_force(rho, &u, params.epsilon, basis),
    ];
    for g in &groups {
        rhs.iter_mut().zip(g).for_each(|(r, x)| *r += x);
    }
    rhs[0] -= params.k_spring * (b - forcing.eval(t)?);
    Ok(MomentumAssembly { mass, rhs })
}

/// Time derivative of the augmented coefficients at frozen density.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumRate {
    pub beta_dot: f64,
    pub c_dot: Vec<f64>,
}

pub fn momentum_rate(assembly: &MomentumAssembly) -> MomentumRate {
    let x = assembly.mass.solve(&assembly.rhs);
    MomentumRate {
        beta_dot: x[0],
        c_dot: x[1..].to_vec(),
    }
}

/// Net wall force `T(L) - T(0)` with `T = (lambda + 2 mu) v' - p`.
///
/// Wall pressure comes from the quadratic through the two nearest cells with
/// zero normal slope, `p_wall = (9 p_0 - p_1) / 8`.
pub fn boundary_stress(rho: &[f64], v_coeffs: &[f64], params: &FluidParams, basis: &Basis) -> f64 {
    let n = rho.len();
    let p = |i: usize| pressure_unchecked(rho[i], params);
    let (p_left, p_right) = if n >= 2 {
        (
            (9.0 * p(0) - p(1)) / 8.0,
            (9.0 * p(n - 1) - p(n - 2)) / 8.0,
        )
    } else {
        (p(0), p(0))
    };
    let (dv_left, dv_right) = basis.boundary_derivatives(v_coeffs);
    let visc = params.longitudinal_viscosity();
    (visc * dv_right - p_right) - (visc * dv_left - p_left)
}

/// `|k (b - f(t)) + T(L) - T(0)|`, the defect of the algebraic Newton law.
pub fn newton_residual(
    state: &FluidState,
    params: &FluidParams,
    forcing: &ForcingSignal,
    basis: &Basis,
) -> Result<f64> {
    let spring = params.k_spring * (state.b - forcing.eval(state.t)?);
    Ok((spring + boundary_stress(&state.rho, &state.v_coeffs, params, basis)).abs())
}
