//! Laplace-Dirichlet eigenbasis on `[0, L]` and the density-weighted mass
//! operator on the augmented space `span{1} + span{psi_j}`.
//!
//! Index 0 of an augmented vector is the constant mode (the container
//! velocity); indices `1..=n_modes` are the sine modes.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Analytic eigenpairs `psi_j = sqrt(2/L) sin(j pi x / L)`, `lam_j = (j pi / L)^2`,
/// sampled at cell centers and cell faces.
#[derive(Debug, Clone)]
pub struct Basis {
    length: f64,
    n_modes: usize,
    n_cells: usize,
    eigenvalues: Vec<f64>,
    // Row-major [cell][alpha], alpha = 0 is the constant mode.
    aug_cells: Vec<f64>,
    // Row-major [cell][alpha]; the constant mode has zero derivative.
    aug_dcells: Vec<f64>,
    // Row-major [face][alpha], faces 0..=n_cells.
    aug_faces: Vec<f64>,
}

impl Basis {
    /// Builds the basis; requires `n_cells >= 4 n_modes`.
    pub fn new(length: f64, n_modes: usize, n_cells: usize) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::Config(format!("domain length must be > 0 (got {length})")));
        }
        if n_modes < 1 {
            return Err(Error::Config("n_modes must be >= 1".into()));
        }
        if n_cells < 4 * n_modes {
            return Err(Error::Config(format!(
                "n_cells = {n_cells} is below the anti-aliasing floor 4 n_modes = {}",
                4 * n_modes
            )));
        }
        let width = n_modes + 1;
        let dx = length / n_cells as f64;
        let eigenvalues = (1..=n_modes)
            .map(|j| (j as f64 * PI / length).powi(2))
            .collect();

        let mut aug_cells = vec![0.0; n_cells * width];
        let mut aug_dcells = vec![0.0; n_cells * width];
        for i in 0..n_cells {
            let x = (i as f64 + 0.5) * dx;
            aug_cells[i * width] = 1.0;
            for j in 1..=n_modes {
                aug_cells[i * width + j] = psi(length, j, x);
                aug_dcells[i * width + j] = dpsi(length, j, x);
            }
        }
        let mut aug_faces = vec![0.0; (n_cells + 1) * width];
        for f in 0..=n_cells {
            aug_faces[f * width] = 1.0;
            // exact zeros at the walls
            if f == 0 || f == n_cells {
                continue;
            }
            let x = f as f64 * dx;
            for j in 1..=n_modes {
                aug_faces[f * width + j] = psi(length, j, x);
            }
        }
        Ok(Self {
            length,
            n_modes,
            n_cells,
            eigenvalues,
            aug_cells,
            aug_dcells,
            aug_faces,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Dimension of the augmented space.
    pub fn width(&self) -> usize {
        self.n_modes + 1
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    /// `lam_j` for `j = 1..=n_modes`, stored at index `j - 1`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Augmented basis values `(1, psi_1, .., psi_n)` at cell center `i`.
    #[inline]
    pub fn cell_row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.aug_cells[i * w..(i + 1) * w]
    }

    /// Augmented basis derivatives `(0, psi_1', .., psi_n')` at cell center `i`.
    #[inline]
    pub fn dcell_row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.aug_dcells[i * w..(i + 1) * w]
    }

    /// Augmented basis values at face `f` (`x = f dx`).
    #[inline]
    pub fn face_row(&self, f: usize) -> &[f64] {
        let w = self.width();
        &self.aug_faces[f * w..(f + 1) * w]
    }

    fn combine(rows: &[f64], width: usize, coeffs: &[f64]) -> Vec<f64> {
        rows.chunks_exact(width)
            .map(|row| row[1..].iter().zip(coeffs).map(|(p, c)| p * c).sum())
            .collect()
    }

    /// `v(x_i)` at cell centers from sine coefficients.
    pub fn reconstruct_cells(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.n_modes);
        Self::combine(&self.aug_cells, self.width(), coeffs)
    }

    /// `v(x_f)` at faces; exactly zero at both walls.
    pub fn reconstruct_faces(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.n_modes);
        Self::combine(&self.aug_faces, self.width(), coeffs)
    }

    /// `v'(x_i)` at cell centers.
    pub fn derivative_cells(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.n_modes);
        Self::combine(&self.aug_dcells, self.width(), coeffs)
    }

    /// `u = beta + v` at cell centers from an augmented vector.
    pub fn reconstruct_augmented(&self, aug: &[f64]) -> Vec<f64> {
        let mut u = self.reconstruct_cells(&aug[1..]);
        u.iter_mut().for_each(|x| *x += aug[0]);
        u
    }

    /// Sine coefficients of cell samples by midpoint quadrature.
    pub fn project(&self, samples: &[f64]) -> Vec<f64> {
        let dx = self.dx();
        let w = self.width();
        let mut out = vec![0.0; self.n_modes];
        for (i, &s) in samples.iter().enumerate() {
            let row = &self.aug_cells[i * w + 1..(i + 1) * w];
            for (o, p) in out.iter_mut().zip(row) {
                *o += s * p;
            }
        }
        out.iter_mut().for_each(|o| *o *= dx);
        out
    }

    /// `v'(0)` and `v'(L)` from the analytic derivatives.
    pub fn boundary_derivatives(&self, coeffs: &[f64]) -> (f64, f64) {
        coeffs
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(left, right), (idx, c)| {
                let j = idx + 1;
                (
                    left + c * dpsi(self.length, j, 0.0),
                    right + c * dpsi(self.length, j, self.length),
                )
            })
    }

    /// Constant-density Gram matrix `G` (the mass operator at `rho = 1`).
    pub fn gram(&self) -> DMatrix<f64> {
        weighted_gram(&vec![1.0; self.n_cells], self)
    }
}

/// `sqrt(2/L) sin(j pi x / L)`
pub fn psi(length: f64, j: usize, x: f64) -> f64 {
    (2.0 / length).sqrt() * (j as f64 * PI * x / length).sin()
}

/// `sqrt(2/L) (j pi / L) cos(j pi x / L)`
pub fn dpsi(length: f64, j: usize, x: f64) -> f64 {
    let k = j as f64 * PI / length;
    (2.0 / length).sqrt() * k * (k * x).cos()
}

/// Builds the basis for the given domain and sizes.
pub fn build_basis(length: f64, n_modes: usize, n_cells: usize) -> Result<Basis> {
    Basis::new(length, n_modes, n_cells)
}

fn weighted_gram(rho: &[f64], basis: &Basis) -> DMatrix<f64> {
    let w = basis.width();
    let dx = basis.dx();
    let mut m = DMatrix::<f64>::zeros(w, w);
    for (i, &r) in rho.iter().enumerate() {
        let row = basis.cell_row(i);
        for a in 0..w {
            let ra = r * row[a];
            for b in a..w {
                m[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..w {
        for b in a..w {
            let value = m[(a, b)] * dx;
            m[(a, b)] = value;
            m[(b, a)] = value;
        }
    }
    m
}

/// Density-weighted Gram matrix `M[a][b] = int rho e_a e_b` and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct MassOperator {
    matrix: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
}

impl MassOperator {
    /// Factors an arbitrary symmetric positive-definite matrix on the augmented space.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let factor = Cholesky::new(matrix.clone()).ok_or(Error::SingularDensity { min: f64::NAN })?;
        Ok(Self { matrix, factor })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `M x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(x);
        v.as_slice().to_vec()
    }

    /// `M^{-1} rhs` through the Cholesky factor.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let x = self.factor.solve(&DVector::from_column_slice(rhs));
        x.as_slice().to_vec()
    }

    /// Dense `M^{-1}`.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.factor.inverse()
    }
}

/// Assembles `M_rho` by midpoint quadrature; requires `min rho > 0`.
pub fn assemble_mass(rho: &[f64], basis: &Basis) -> Result<MassOperator> {
    let min = rho.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::SingularDensity { min });
    }
    let matrix = weighted_gram(rho, basis);
    let factor = Cholesky::new(matrix.clone()).ok_or(Error::SingularDensity { min })?;
    Ok(MassOperator { matrix, factor })
}

/// `M^{-1} rhs`.
pub fn solve_mass(mass: &MassOperator, rhs: &[f64]) -> Vec<f64> {
    mass.solve(rhs)
}

/// Orthogonal projection of the augmented space onto the sine block.
pub fn project_dirichlet(aug: &[f64]) -> Vec<f64> {
    aug.get(1..).map(<[f64]>::to_vec).unwrap_or_default()
}
