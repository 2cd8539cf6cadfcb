//! Density transport `rho_t + (rho v)_x = eps rho_xx` with zero-flux walls.
//!
//! Cell-centered finite volumes. The advective face flux is first-order upwind,
//! the diffusive flux is a two-point gradient; both are taken at the new time
//! level, so each step is one tridiagonal solve with an M-matrix. Columns of
//! that matrix sum to `dx/dt`, which is what makes mass conservation exact.

use crate::error::{Error, Result};

/// Cell-centered density samples on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub dx: f64,
    pub rho: Vec<f64>,
}

impl DensityGrid {
    pub fn new(rho: Vec<f64>, dx: f64) -> Self {
        Self { dx, rho }
    }

    pub fn n_cells(&self) -> usize {
        self.rho.len()
    }

    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.dx
    }

    pub fn min(&self) -> f64 {
        self.rho.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.rho.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Face gradients `(rho_i - rho_{i-1}) / dx`; zero on the two wall faces.
///
/// Returns `n_cells + 1` values indexed by face.
pub fn grad_rho(rho: &[f64], dx: f64) -> Vec<f64> {
    let n = rho.len();
    let mut g = vec![0.0; n + 1];
    for f in 1..n {
        g[f] = (rho[f] - rho[f - 1]) / dx;
    }
    g
}

/// Upwind advective mass flux `v_f rho_up` on every face (zero on the walls).
pub fn advective_flux(rho: &[f64], v_faces: &[f64]) -> Vec<f64> {
    let n = rho.len();
    let mut flux = vec![0.0; n + 1];
    for f in 1..n {
        let v = v_faces[f];
        flux[f] = if v >= 0.0 { v * rho[f - 1] } else { v * rho[f] };
    }
    flux
}

/// `max |v| dt / dx` over the faces.
pub fn cfl_ratio(v_faces: &[f64], dt: f64, dx: f64) -> f64 {
    v_faces.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * dt / dx
}

/// Advances the density by one step with face velocities `v_faces`
/// (`n_cells + 1` values, zero at both walls).
pub fn continuity_step(
    grid: &DensityGrid,
    v_faces: &[f64],
    dt: f64,
    epsilon: f64,
) -> Result<DensityGrid> {
    let n = grid.n_cells();
    if v_faces.len() != n + 1 {
        return Err(Error::Config(format!(
            "expected {} face velocities, got {}",
            n + 1,
            v_faces.len()
        )));
    }
    if v_faces[0] != 0.0 || v_faces[n] != 0.0 {
        return Err(Error::Config("face velocity must vanish on the walls".into()));
    }
    let min = grid.min();
    if !(min > 0.0) {
        return Err(Error::SingularDensity { min });
    }
    let ratio = cfl_ratio(v_faces, dt, grid.dx);
    if ratio > 1.0 {
        return Err(Error::Cfl { ratio });
    }

    let dx = grid.dx;
    let diff = epsilon / dx;
    let mut lower = vec![0.0; n];
    let mut diag = vec![dx / dt; n];
    let mut upper = vec![0.0; n];
    // Solved in increment form so that a state with zero flux divergence is
    // reproduced bit for bit.
    let mut residual = vec![0.0; n];
    let rho0 = &grid.rho;

    // Face f sits between cells f-1 and f; walls carry no flux.
    for f in 1..n {
        let v = v_faces[f];
        let (vp, vm) = (v.max(0.0), v.min(0.0));
        // flux F_f = vp rho_{f-1} + vm rho_f - diff (rho_f - rho_{f-1})
        // leaves cell f-1 and enters cell f
        diag[f - 1] += vp + diff;
        upper[f - 1] += vm - diff;
        lower[f] += -vp - diff;
        diag[f] += -vm + diff;
        let flux = vp * rho0[f - 1] + vm * rho0[f] - diff * (rho0[f] - rho0[f - 1]);
        residual[f - 1] -= flux;
        residual[f] += flux;
    }

    let delta = solve_tridiagonal(&lower, &diag, &upper, &residual);
    let rho: Vec<f64> = rho0.iter().zip(&delta).map(|(r, d)| r + d).collect();
    if let Some((cell, &value)) = rho
        .iter()
        .enumerate()
        .find(|(_, r)| !(**r > 0.0) || !r.is_finite())
    {
        return Err(Error::Positivity { cell, value });
    }
    Ok(DensityGrid { dx, rho })
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
pub(crate) fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cosine_grid(n: usize, length: f64, amp: f64) -> DensityGrid {
        let dx = length / n as f64;
        let rho = (0..n)
            .map(|i| 1.0 + amp * (PI * (i as f64 + 0.5) * dx / length).cos())
            .collect();
        DensityGrid::new(rho, dx)
    }

    #[test]
    fn constant_is_steady() {
        let grid = DensityGrid::new(vec![1.0; 50], 0.02);
        let out = continuity_step(&grid, &vec![0.0; 51], 0.3, 0.7).unwrap();
        for r in out.rho {
            assert!((r - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn neumann_cosine_mode_decays_at_heat_kernel_rate() {
        let (n, length, eps, dt) = (512, 1.0, 0.1, 1e-4);
        let mut grid = cosine_grid(n, length, 0.1);
        let v = vec![0.0; n + 1];
        for _ in 0..1000 {
            grid = continuity_step(&grid, &v, dt, eps).unwrap();
        }
        let dx = grid.dx;
        let amp: f64 = grid
            .rho
            .iter()
            .enumerate()
            .map(|(i, r)| (r - 1.0) * (PI * (i as f64 + 0.5) * dx).cos())
            .sum::<f64>()
            * 2.0
            * dx;
        let expected = 0.1 * (-eps * PI * PI * 0.1_f64).exp();
        assert!(((amp - expected) / expected).abs() < 1e-4, "{amp} vs {expected}");
    }

    #[test]
    fn grad_examples() {
        assert!(grad_rho(&[2.0; 8], 0.1).iter().all(|g| *g == 0.0));
        let rho: Vec<f64> = (0..8).map(|i| 1.0 + 0.5 * i as f64).collect();
        let g = grad_rho(&rho, 0.25);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[8], 0.0);
        for gf in &g[1..8] {
            assert!((gf - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn grad_is_second_order_at_interior_faces() {
        let err = |n: usize| {
            let dx = 1.0 / n as f64;
            let rho: Vec<f64> = (0..n).map(|i| (PI * (i as f64 + 0.5) * dx).cos()).collect();
            let g = grad_rho(&rho, dx);
            (1..n)
                .map(|f| (g[f] + PI * (PI * f as f64 * dx).sin()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(64), err(128));
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.05, "order {order}");
    }

    #[test]
    fn cfl_violation_rejected() {
        let grid = DensityGrid::new(vec![1.0; 10], 0.1);
        let mut v = vec![0.0; 11];
        v[5] = 2.0;
        assert!(matches!(
            continuity_step(&grid, &v, 0.06, 0.0),
            Err(Error::Cfl { .. })
        ));
        assert!(continuity_step(&grid, &v, 0.05, 0.0).is_ok());
    }

    #[test]
    fn pure_upwind_transport_when_epsilon_is_zero() {
        let grid = cosine_grid(40, 1.0, 0.2);
        let v: Vec<f64> = (0..=40)
            .map(|f| (PI * f as f64 / 40.0).sin() * 0.5)
            .map(|x| if x.abs() < 1e-15 { 0.0 } else { x })
            .collect();
        let mut v = v;
        v[0] = 0.0;
        v[40] = 0.0;
        let out = continuity_step(&grid, &v, 0.01, 0.0).unwrap();
        assert!((out.mass() - grid.mass()).abs() < 1e-14);
        assert!(out.min() > 0.0);
    }

    #[test]
    fn tridiagonal_matches_dense_solve() {
        let lower = [0.0, -1.0, -0.5, -0.2];
        let diag = [4.0, 3.0, 5.0, 2.0];
        let upper = [-1.0, -0.3, -1.0, 0.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        let m = nalgebra::DMatrix::from_row_slice(
            4,
            4,
            &[4.0, -1.0, 0.0, 0.0, -1.0, 3.0, -0.3, 0.0, 0.0, -0.5, 5.0, -1.0, 0.0, 0.0, -0.2, 2.0],
        );
        let y = m.lu().solve(&nalgebra::DVector::from_column_slice(&rhs)).unwrap();
        for i in 0..4 {
            assert!((x[i] - y[i]).abs() < 1e-14);
        }
    }
}
