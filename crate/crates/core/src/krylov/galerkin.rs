use nalgebra::DMatrix;

use super::basis::hcat;
use crate::error::{Error, Result};
use crate::linalg::{mgs_qr_any, TridiagonalOperator};
use crate::lowrank::LowRankFactors;

/// Projection of one tridiagonal operator onto an orthonormal basis `U`:
/// `Ã = UᵀAU` and the triangular factor of `[U, AU] = Q R`.
#[derive(Debug, Clone)]
pub struct ProjectedOperator {
    pub a: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

pub fn project_operator(op: &TridiagonalOperator, u: &DMatrix<f64>) -> Result<ProjectedOperator> {
    if op.n() != u.nrows() {
        return Err(Error::dims("project_operator", op.n(), u.nrows()));
    }
    let au = op.apply(u)?;
    let a = u.transpose() * &au;
    let (_, r) = mgs_qr_any(&hcat(u, &au));
    Ok(ProjectedOperator { a, r })
}

/// Reduced Sylvester system `Ã₁ S + S Ã₂ᵀ = B̃` together with the factors
/// needed to evaluate the full-size residual norm.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub r_u: DMatrix<f64>,
    pub r_v: DMatrix<f64>,
}

/// `B̃ = (U₁ᵀU₀) S₀ (V₁ᵀV₀)ᵀ`.
pub fn project_rhs(u1: &DMatrix<f64>, v1: &DMatrix<f64>, b: &LowRankFactors) -> Result<DMatrix<f64>> {
    let (n1, n2) = b.shape();
    if u1.nrows() != n1 || v1.nrows() != n2 {
        return Err(Error::dims(
            "project_rhs",
            format!("bases with {n1} and {n2} rows"),
            format!("{} and {}", u1.nrows(), v1.nrows()),
        ));
    }
    Ok((u1.transpose() * b.u()) * b.s() * (v1.transpose() * b.v()).transpose())
}

pub fn assemble_galerkin(
    a1: &TridiagonalOperator,
    a2: &TridiagonalOperator,
    u1: &DMatrix<f64>,
    v1: &DMatrix<f64>,
    b: &LowRankFactors,
) -> Result<GalerkinSystem> {
    let p1 = project_operator(a1, u1)?;
    let p2 = project_operator(a2, v1)?;
    Ok(GalerkinSystem {
        b: project_rhs(u1, v1, b)?,
        a1: p1.a,
        a2: p2.a,
        r_u: p1.r,
        r_v: p2.r,
    })
}

/// `‖R_U [[−B̃, S], [S, 0]] R_Vᵀ‖_F`, the Frobenius norm of
/// `A₁ U S Vᵀ + U S Vᵀ A₂ᵀ − B` whenever `B` lies in the span of the bases.
pub fn residual_from_factors(
    r_u: &DMatrix<f64>,
    r_v: &DMatrix<f64>,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<f64> {
    let (k1, k2) = s.shape();
    if b.shape() != (k1, k2) || r_u.ncols() != 2 * k1 || r_v.ncols() != 2 * k2 {
        return Err(Error::dims(
            "residual_norm",
            format!("core {k1}x{k2}, R_U with {} cols, R_V with {} cols", 2 * k1, 2 * k2),
            format!("B̃ {:?}, R_U {:?}, R_V {:?}", b.shape(), r_u.shape(), r_v.shape()),
        ));
    }
    let mut block = DMatrix::zeros(2 * k1, 2 * k2);
    block.view_mut((0, 0), (k1, k2)).copy_from(&(-b));
    block.view_mut((0, k2), (k1, k2)).copy_from(s);
    block.view_mut((k1, 0), (k1, k2)).copy_from(s);
    Ok((r_u * block * r_v.transpose()).norm())
}

pub fn residual_norm(sys: &GalerkinSystem, s: &DMatrix<f64>) -> Result<f64> {
    residual_from_factors(&sys.r_u, &sys.r_v, &sys.b, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mgs_qr, solve_sylvester_dense};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tridiag(n: usize, rng: &mut ChaCha8Rng) -> TridiagonalOperator {
        let lower: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        let upper: Vec<f64> = (0..n).map(|i| if i + 1 == n { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
        let diag: Vec<f64> = (0..n).map(|_| 2.5 + rng.random_range(0.0..1.0)).collect();
        TridiagonalOperator::new(lower, diag, upper).unwrap()
    }

    fn random(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn dense_residual(
        a1: &TridiagonalOperator,
        a2: &TridiagonalOperator,
        f: &DMatrix<f64>,
        b: &DMatrix<f64>,
    ) -> DMatrix<f64> {
        a1.to_dense() * f + f * a2.to_dense().transpose() - b
    }

    #[test]
    fn full_basis_reproduces_dense_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let n = 10;
        let a = random_tridiag(n, &mut rng);
        let b = LowRankFactors::new(random(n, 2, &mut rng), random(2, 2, &mut rng), random(n, 2, &mut rng)).unwrap();
        let eye = DMatrix::identity(n, n);
        let sys = assemble_galerkin(&a, &a, &eye, &eye, &b).unwrap();
        assert!((&sys.a1 - a.to_dense()).norm() < 1e-14);
        assert!((&sys.b - b.materialize()).norm() < 1e-14);
    }

    #[test]
    fn orthogonal_rhs_projects_to_zero() {
        let n = 6;
        let v1 = DMatrix::identity(n, 3);
        let mut v0 = DMatrix::zeros(n, 1);
        v0[(4, 0)] = 1.0;
        let b = LowRankFactors::new(DMatrix::from_element(n, 1, 1.0), DMatrix::from_element(1, 1, 2.0), v0).unwrap();
        assert_eq!(project_rhs(&v1, &v1, &b).unwrap().norm(), 0.0);
    }

    #[test]
    fn projected_operator_matches_dense_triple_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let a = random_tridiag(40, &mut rng);
        let (u, _) = mgs_qr(&random(40, 7, &mut rng)).unwrap();
        let p = project_operator(&a, &u).unwrap();
        assert!((&p.a - u.transpose() * a.to_dense() * &u).norm() < 1e-13);
    }

    #[test]
    fn zero_core_zero_rhs_gives_zero() {
        let r = DMatrix::identity(4, 4);
        assert_eq!(residual_from_factors(&r, &r, &DMatrix::zeros(2, 2), &DMatrix::zeros(2, 2)).unwrap(), 0.0);
    }

    #[test]
    fn exact_full_basis_solution_has_tiny_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let n = 16;
        let a1 = random_tridiag(n, &mut rng);
        let a2 = random_tridiag(n, &mut rng);
        let b = LowRankFactors::new(random(n, 3, &mut rng), random(3, 3, &mut rng), random(n, 3, &mut rng)).unwrap();
        let eye = DMatrix::identity(n, n);
        let sys = assemble_galerkin(&a1, &a2, &eye, &eye, &b).unwrap();
        let s = solve_sylvester_dense(&sys.a1, &sys.a2, &sys.b).unwrap();
        assert!(residual_norm(&sys, &s).unwrap() <= 1e-10 * b.materialize().norm());
    }

    #[test]
    fn residual_identity_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        for trial in 0..128 {
            let n = rng.random_range(8..=64);
            let r0 = rng.random_range(1..=3);
            let a1 = random_tridiag(n, &mut rng);
            let a2 = random_tridiag(n, &mut rng);
            let u0 = random(n, r0, &mut rng);
            let v0 = random(n, r0, &mut rng);
            let b = LowRankFactors::new(u0.clone(), random(r0, r0, &mut rng), v0.clone()).unwrap();
            // Bases containing the seed plus random extra directions.
            let extra1 = rng.random_range(0..=5);
            let extra2 = rng.random_range(0..=5);
            let (u1, _) = mgs_qr(&hcat(&u0, &random(n, extra1, &mut rng))).unwrap();
            let (v1, _) = mgs_qr(&hcat(&v0, &random(n, extra2, &mut rng))).unwrap();
            let sys = assemble_galerkin(&a1, &a2, &u1, &v1, &b).unwrap();
            let s = if trial % 2 == 0 {
                solve_sylvester_dense(&sys.a1, &sys.a2, &sys.b).unwrap()
            } else {
                random(u1.ncols(), v1.ncols(), &mut rng)
            };
            let f = &u1 * &s * v1.transpose();
            let dense = dense_residual(&a1, &a2, &f, &b.materialize());
            let fast = residual_norm(&sys, &s).unwrap();
            assert!((fast - dense.norm()).abs() <= 1e-9 * dense.norm(), "trial {trial}: {fast} vs {}", dense.norm());
            if trial % 2 == 0 {
                // Galerkin orthogonality.
                assert!((u1.transpose() * &dense * &v1).norm() <= 1e-10 * b.materialize().norm());
            }
        }
    }

    #[test]
    fn residual_rejects_bad_shapes() {
        let r = DMatrix::identity(4, 4);
        assert!(residual_from_factors(&r, &r, &DMatrix::zeros(2, 3), &DMatrix::zeros(2, 2)).is_err());
    }
}
