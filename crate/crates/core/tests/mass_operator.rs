use fluidosc::basis::{assemble_mass, Basis};
use fluidosc::Error;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn lambda_min(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// `|A^-1 - B^-1 - A^-1 (B - A) B^-1| / |A^-1 - B^-1|` in the Frobenius norm.
fn resolvent_defect(rho_a: &[f64], rho_b: &[f64], basis: &Basis) -> f64 {
    let a = assemble_mass(rho_a, basis).unwrap();
    let b = assemble_mass(rho_b, basis).unwrap();
    let (ai, bi) = (a.inverse(), b.inverse());
    let lhs = &ai - &bi;
    let rhs = &ai * (b.matrix() - a.matrix()) * &bi;
    (&lhs - rhs).norm() / lhs.norm()
}

#[test]
fn gram_is_the_mass_of_unit_density() {
    let basis = Basis::new(1.0, 8, 128).unwrap();
    let m = assemble_mass(&vec![1.0; 128], &basis).unwrap();
    assert_eq!(m.matrix(), &basis.gram());
    // int 1 dx over [0, 1]
    assert!((m.matrix()[(0, 0)] - 1.0).abs() < 1e-14);
}

#[test]
fn sine_block_is_nearly_orthonormal() {
    let basis = Basis::new(2.0, 6, 512).unwrap();
    let g = basis.gram();
    for a in 1..7 {
        for b in 1..7 {
            let expect = if a == b { 1.0 } else { 0.0 };
            assert!((g[(a, b)] - expect).abs() < 1e-12, "{a} {b} {}", g[(a, b)]);
        }
    }
}

#[test]
fn vanishing_density_is_rejected() {
    let basis = Basis::new(1.0, 4, 16).unwrap();
    let mut rho = vec![1.0; 16];
    rho[3] = 0.0;
    assert!(matches!(assemble_mass(&rho, &basis), Err(Error::SingularDensity { .. })));
}

#[test]
fn scaling_density_scales_the_inverse() {
    let basis = Basis::new(1.0, 5, 64).unwrap();
    let rho: Vec<f64> = (0..64).map(|i| 1.0 + 0.5 * (i as f64 * 0.3).sin()).collect();
    let twice: Vec<f64> = rho.iter().map(|r| 2.0 * r).collect();
    let a = assemble_mass(&rho, &basis).unwrap().inverse();
    let b = assemble_mass(&twice, &basis).unwrap().inverse();
    assert!((a - 2.0 * b).norm() < 1e-10);
}

fn density(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.5f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lower_eigenvalue_bound(rho in density(96)) {
        let basis = Basis::new(1.0, 8, 96).unwrap();
        let m = assemble_mass(&rho, &basis).unwrap();
        let rho_min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        let bound = rho_min * lambda_min(&basis.gram());
        prop_assert!(lambda_min(m.matrix()) >= bound * (1.0 - 1e-12));
    }

    #[test]
    fn resolvent_identity(a in density(96), b in density(96)) {
        let basis = Basis::new(1.0, 8, 96).unwrap();
        prop_assert!(resolvent_defect(&a, &b, &basis) <= 1e-10);
    }

    #[test]
    fn solve_inverts_apply(rho in density(64), x in prop::collection::vec(-1.0f64..1.0, 7)) {
        let basis = Basis::new(1.0, 6, 64).unwrap();
        let m = assemble_mass(&rho, &basis).unwrap();
        let back = m.solve(&m.apply(&x));
        for (u, v) in back.iter().zip(&x) {
            prop_assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn mass_is_monotone_in_density(rho in density(64), bump in density(64)) {
        // M(rho + s) - M(rho) = M(s) is positive definite
        let basis = Basis::new(1.0, 6, 64).unwrap();
        let sum: Vec<f64> = rho.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let d = assemble_mass(&sum, &basis).unwrap().matrix() - assemble_mass(&rho, &basis).unwrap().matrix();
        prop_assert!(lambda_min(&d) > 0.0);
    }
}
