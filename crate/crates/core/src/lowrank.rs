//! Low-rank factored matrices `U S Vᵀ` and the operations both models share:
//! truncation, addition, Frobenius norm and velocity-moment integrals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, mgs_qr_any, reduced_svd, DenseMatrix};

/// Tolerance used when asserting orthonormality of factors.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// `F = U S Vᵀ` with `U: N₁×r₁`, `S: r₁×r₂`, `V: N₂×r₂`.
///
/// Cores are square after [`truncate`]; intermediate results (block sums,
/// deflated re-orthonormalizations) may carry rectangular cores.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    u: DenseMatrix,
    s: DenseMatrix,
    v: DenseMatrix,
    orthonormal: bool,
}

impl LowRankFactors {
    /// Factors with no orthonormality assumption.
    pub fn new(u: DenseMatrix, s: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        if u.ncols() != s.nrows() || v.ncols() != s.ncols() {
            return Err(Error::dims(
                "LowRankFactors::new",
                format!("U:Nx{}, V:Nx{}", s.nrows(), s.ncols()),
                format!("U:{:?}, V:{:?}", u.shape(), v.shape()),
            ));
        }
        ensure_finite(&u, "left factor")?;
        ensure_finite(&s, "core")?;
        ensure_finite(&v, "right factor")?;
        Ok(LowRankFactors {
            u,
            s,
            v,
            orthonormal: false,
        })
    }

    /// Factors whose `U` and `V` columns are orthonormal; verified to [`ORTHONORMAL_TOL`].
    pub fn new_orthonormal(u: DenseMatrix, s: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        let mut f = Self::new(u, s, v)?;
        if orthonormality_error(&f.u) > ORTHONORMAL_TOL || orthonormality_error(&f.v) > ORTHONORMAL_TOL {
            return Err(Error::InvalidInput("factors are not orthonormal".into()));
        }
        f.orthonormal = true;
        Ok(f)
    }

    /// Skips the orthonormality check; callers guarantee it by construction.
    pub(crate) fn from_orthonormal_parts(u: DenseMatrix, s: DenseMatrix, v: DenseMatrix) -> Self {
        debug_assert_eq!(u.ncols(), s.nrows());
        debug_assert_eq!(v.ncols(), s.ncols());
        LowRankFactors {
            u,
            s,
            v,
            orthonormal: true,
        }
    }

    /// Sum of separable terms `Σ c_k x_k y_kᵀ`.
    pub fn from_outer_products(terms: &[(Vec<f64>, Vec<f64>, f64)]) -> Result<Self> {
        let Some((x0, y0, _)) = terms.first() else {
            return Err(Error::InvalidInput("no outer-product terms".into()));
        };
        let (n1, n2, r) = (x0.len(), y0.len(), terms.len());
        if terms.iter().any(|(x, y, _)| x.len() != n1 || y.len() != n2) {
            return Err(Error::dims("from_outer_products", format!("{n1}, {n2}"), "ragged terms"));
        }
        let u = DMatrix::from_fn(n1, r, |i, k| terms[k].0[i]);
        let v = DMatrix::from_fn(n2, r, |j, k| terms[k].1[j]);
        let s = DMatrix::from_diagonal(&DVector::from_iterator(r, terms.iter().map(|t| t.2)));
        Self::new(u, s, v)
    }

    /// Rank-1 zero matrix (unit factors, zero core).
    pub fn zero(n1: usize, n2: usize) -> Self {
        let mut u = DMatrix::zeros(n1, 1);
        let mut v = DMatrix::zeros(n2, 1);
        u[(0, 0)] = 1.0;
        v[(0, 0)] = 1.0;
        LowRankFactors::from_orthonormal_parts(u, DMatrix::zeros(1, 1), v)
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn s(&self) -> &DenseMatrix {
        &self.s
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn into_parts(self) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
        (self.u, self.s, self.v)
    }

    /// `(N₁, N₂)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.u.nrows(), self.v.nrows())
    }

    /// Number of retained modes (`min` of the core dimensions).
    pub fn rank(&self) -> usize {
        self.s.nrows().min(self.s.ncols())
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Measured `max(‖UᵀU − I‖_F, ‖VᵀV − I‖_F)`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.u).max(orthonormality_error(&self.v))
    }

    pub fn materialize(&self) -> DenseMatrix {
        &self.u * &self.s * self.v.transpose()
    }

    /// Rows `start..start+len` of the materialized matrix.
    pub fn materialize_rows(&self, start: usize, len: usize) -> DenseMatrix {
        self.u.rows(start, len) * &self.s * self.v.transpose()
    }

    pub fn scaled(&self, c: f64) -> Self {
        LowRankFactors {
            u: self.u.clone(),
            s: &self.s * c,
            v: self.v.clone(),
            orthonormal: self.orthonormal,
        }
    }

    /// Re-expresses the factors with orthonormal `U`, `V`:
    /// `U = Q₁R₁`, `V = Q₂R₂`, `S ← R₁ S R₂ᵀ`.
    pub fn orthonormalized(&self) -> Self {
        if self.orthonormal {
            return self.clone();
        }
        let (q1, r1) = mgs_qr_any(&self.u);
        let (q2, r2) = mgs_qr_any(&self.v);
        let s = &r1 * &self.s * r2.transpose();
        LowRankFactors::from_orthonormal_parts(q1, s, q2)
    }

    /// `‖U‖`-weighted row/column sums `1ᵀ F 1`.
    pub fn total_sum(&self) -> f64 {
        let a = self.u.row_sum();
        let b = self.v.row_sum();
        (a * &self.s * b.transpose())[(0, 0)]
    }

    /// `xᵀ F y` computed factor-wise in `O(N r + r²)`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let a = DVector::from_column_slice(x).transpose() * &self.u;
        let b = self.v.transpose() * DVector::from_column_slice(y);
        (a * &self.s * b)[(0, 0)]
    }

    /// `Σ |F_ij|` by materializing at most `block` rows at a time.
    pub fn l1_sum_blocked(&self, block: usize) -> f64 {
        let n1 = self.u.nrows();
        let mut total = 0.0;
        let mut start = 0;
        while start < n1 {
            let len = block.min(n1 - start);
            total += self.materialize_rows(start, len).iter().map(|x| x.abs()).sum::<f64>();
            start += len;
        }
        total
    }
}

fn orthonormality_error(q: &DenseMatrix) -> f64 {
    let k = q.ncols();
    (q.transpose() * q - DMatrix::identity(k, k)).norm()
}

/// Truncation `T_ε`: re-orthonormalizes when needed, takes the SVD of the core
/// and keeps the modes with `σ_j > ε`. At least one mode is always kept.
pub fn truncate(f: &LowRankFactors, eps: f64) -> Result<LowRankFactors> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidInput(format!("truncation tolerance {eps} < 0")));
    }
    let f = f.orthonormalized();
    let (n1, n2) = f.shape();
    if f.s.nrows() == 0 || f.s.ncols() == 0 {
        return Ok(LowRankFactors::zero(n1, n2));
    }
    let svd = reduced_svd(&f.s)?;
    let keep = svd.sigma.iter().take_while(|&&s| s > eps).count().max(1);
    let u = &f.u * svd.left.columns(0, keep);
    let v = &f.v * svd.right.columns(0, keep);
    let s = DMatrix::from_diagonal(&DVector::from_column_slice(&svd.sigma[..keep]));
    Ok(LowRankFactors::from_orthonormal_parts(u, s, v))
}

/// Largest singular value of `F` (`‖F‖₂`).
pub fn leading_singular_value(f: &LowRankFactors) -> Result<f64> {
    let f = f.orthonormalized();
    Ok(reduced_svd(&f.s)?.sigma.first().copied().unwrap_or(0.0))
}

/// `‖U S Vᵀ‖_F` without forming the full matrix.
pub fn lr_frobenius(f: &LowRankFactors) -> f64 {
    if f.orthonormal {
        f.s.norm()
    } else {
        f.orthonormalized().s.norm()
    }
}

/// Block concatenation `[U_F, U_G] diag(S_F, S_G) [V_F, V_G]ᵀ`.
pub fn lr_add(f: &LowRankFactors, g: &LowRankFactors) -> Result<LowRankFactors> {
    if f.shape() != g.shape() {
        return Err(Error::dims("lr_add", format!("{:?}", f.shape()), format!("{:?}", g.shape())));
    }
    let (n1, n2) = f.shape();
    let (a1, a2) = f.s.shape();
    let (b1, b2) = g.s.shape();
    let mut u = DMatrix::zeros(n1, a1 + b1);
    u.columns_mut(0, a1).copy_from(&f.u);
    u.columns_mut(a1, b1).copy_from(&g.u);
    let mut v = DMatrix::zeros(n2, a2 + b2);
    v.columns_mut(0, a2).copy_from(&f.v);
    v.columns_mut(a2, b2).copy_from(&g.v);
    let mut s = DMatrix::zeros(a1 + b1, a2 + b2);
    s.view_mut((0, 0), (a1, a2)).copy_from(&f.s);
    s.view_mut((a1, a2), (b1, b2)).copy_from(&g.s);
    Ok(LowRankFactors {
        u,
        s,
        v,
        orthonormal: false,
    })
}

/// Discrete velocity moments of a distribution on a tensor grid.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    /// Number density `Σ F ΔA`.
    pub density: f64,
    /// Particle flux `(Σ v₁F ΔA, Σ v₂F ΔA)`.
    pub flux: [f64; 2],
    /// `½ Σ (v₁² + v₂²) F ΔA`.
    pub energy: f64,
}

impl Moments {
    /// Moments of a species with density `n`, drift `u` and temperature `t`
    /// in two velocity dimensions.
    pub fn from_primitive(n: f64, u: [f64; 2], t: f64, mass: f64) -> Moments {
        let flux = [n * u[0], n * u[1]];
        Moments {
            density: n,
            flux,
            energy: 0.5 * (u[0] * flux[0] + u[1] * flux[1]) + n * t / mass,
        }
    }

    pub fn from_array(a: [f64; 4]) -> Moments {
        Moments {
            density: a[0],
            flux: [a[1], a[2]],
            energy: a[3],
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.density, self.flux[0], self.flux[1], self.energy]
    }

    /// `u = γ/n`.
    pub fn drift(&self) -> [f64; 2] {
        [self.flux[0] / self.density, self.flux[1] / self.density]
    }

    /// `T = m (2ℰ − u·γ) / (2n)`.
    pub fn temperature(&self, mass: f64) -> f64 {
        let u = self.drift();
        mass * (2.0 * self.energy - u[0] * self.flux[0] - u[1] * self.flux[1]) / (2.0 * self.density)
    }
}

impl std::ops::Add for Moments {
    type Output = Moments;
    fn add(self, o: Moments) -> Moments {
        Moments {
            density: self.density + o.density,
            flux: [self.flux[0] + o.flux[0], self.flux[1] + o.flux[1]],
            energy: self.energy + o.energy,
        }
    }
}

/// Moments `(n, γ¹, γ², ℰ)` of `F` on nodes `grid1 × grid2` with cell area
/// `cell_area = Δv₁Δv₂`, evaluated factor-wise in `O(N r + r²)`.
pub fn lr_moments(
    f: &LowRankFactors,
    grid1: &[f64],
    grid2: &[f64],
    cell_area: f64,
) -> Result<Moments> {
    let (n1, n2) = f.shape();
    if grid1.len() != n1 || grid2.len() != n2 {
        return Err(Error::dims(
            "lr_moments",
            format!("grids of {n1} and {n2} nodes"),
            format!("{} and {}", grid1.len(), grid2.len()),
        ));
    }
    // Row vectors gᵀU for g ∈ {1, v₁, v₁²} and column vectors Vᵀh for h ∈ {1, v₂, v₂²}.
    let weights1 = DMatrix::from_fn(3, n1, |p, i| grid1[i].powi(p as i32));
    let weights2 = DMatrix::from_fn(n2, 3, |j, q| grid2[j].powi(q as i32));
    let left = weights1 * &f.u * &f.s;
    let right = f.v.transpose() * weights2;
    let m = left * right;
    Ok(Moments {
        density: cell_area * m[(0, 0)],
        flux: [cell_area * m[(1, 0)], cell_area * m[(0, 1)]],
        energy: 0.5 * cell_area * (m[(2, 0)] + m[(0, 2)]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_lr(n1: usize, n2: usize, r: usize, rng: &mut ChaCha8Rng) -> LowRankFactors {
        LowRankFactors::new(
            DMatrix::from_fn(n1, r, |_, _| rng.random_range(-1.0..1.0)),
            DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0)),
            DMatrix::from_fn(n2, r, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap()
    }

    /// Dense truncation oracle: SVD of the materialized matrix, keep σ > ε.
    fn dense_truncation(m: &DMatrix<f64>, eps: f64) -> DMatrix<f64> {
        let svd = m.clone().svd(true, true);
        let mut sigma = svd.singular_values.clone();
        sigma.iter_mut().for_each(|s| {
            if *s <= eps {
                *s = 0.0
            }
        });
        svd.u.unwrap() * DMatrix::from_diagonal(&sigma) * svd.v_t.unwrap()
    }

    #[test]
    fn rejects_mismatched_and_nonfinite() {
        assert!(LowRankFactors::new(DMatrix::zeros(3, 2), DMatrix::zeros(1, 1), DMatrix::zeros(3, 1)).is_err());
        let mut s = DMatrix::zeros(1, 1);
        s[(0, 0)] = f64::NAN;
        assert!(matches!(
            LowRankFactors::new(DMatrix::zeros(3, 1), s, DMatrix::zeros(3, 1)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn truncate_keeps_everything_above_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let f = random_lr(30, 25, 4, &mut rng);
        let t = truncate(&f, 1e-14).unwrap();
        assert_eq!(t.rank(), 4);
        assert!(t.orthonormality_error() < 1e-12);
        let m = f.materialize();
        assert!((t.materialize() - &m).norm() / m.norm() < 1e-12);
    }

    #[test]
    fn truncate_drops_tiny_mode() {
        let x1 = vec![1.0, 0.0, 0.0];
        let x2 = vec![0.0, 1.0, 0.0];
        let f = LowRankFactors::from_outer_products(&[(x1.clone(), x1, 1.0), (x2.clone(), x2, 1e-12)]).unwrap();
        assert_eq!(truncate(&f, 1e-8).unwrap().rank(), 1);
    }

    #[test]
    fn truncate_never_returns_rank_zero() {
        let f = LowRankFactors::from_outer_products(&[(vec![1.0, 2.0], vec![3.0, 1.0], 1e-3)]).unwrap();
        let t = truncate(&f, 1.0).unwrap();
        assert_eq!(t.rank(), 1);
        assert!((t.materialize() - f.materialize()).norm() < 1e-15);
        let z = truncate(&LowRankFactors::zero(4, 5), 0.0).unwrap();
        assert_eq!(z.rank(), 1);
    }

    #[test]
    fn truncate_matches_dense_svd_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        // Rank-10 with geometrically decaying spectrum.
        let terms: Vec<_> = (0..10)
            .map(|k| {
                let x: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
                let y: Vec<f64> = (0..35).map(|_| rng.random_range(-1.0..1.0)).collect();
                (x, y, 10f64.powi(-(k as i32)))
            })
            .collect();
        let f = LowRankFactors::from_outer_products(&terms).unwrap();
        let m = f.materialize();
        let sv = m.clone().svd(false, false).singular_values;
        let eps = (sv[4] * sv[5]).sqrt();
        let t = truncate(&f, eps).unwrap();
        assert_eq!(t.rank(), 5);
        let oracle = dense_truncation(&m, eps);
        assert!((t.materialize() - &oracle).norm() < 1e-11 * m.norm());
        let dropped: f64 = sv.iter().skip(5).map(|s| s * s).sum::<f64>().sqrt();
        assert!((t.materialize() - &m).norm() <= dropped + 1e-12 * m.norm());
    }

    #[test]
    fn truncate_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let f = random_lr(20, 20, 6, &mut rng);
        let eps = 0.3;
        let once = truncate(&f, eps).unwrap();
        let twice = truncate(&once, eps).unwrap();
        assert_eq!(once.rank(), twice.rank());
        assert!((once.materialize() - twice.materialize()).norm() < 1e-13 * once.materialize().norm().max(1.0));
    }

    #[test]
    fn frobenius_cases() {
        let u = DMatrix::identity(4, 2);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 4.0]));
        let f = LowRankFactors::new_orthonormal(u.clone(), s, u.clone()).unwrap();
        assert!((lr_frobenius(&f) - 5.0).abs() < 1e-15);
        let z = LowRankFactors::new(u.clone(), DMatrix::zeros(2, 2), u).unwrap();
        assert_eq!(lr_frobenius(&z), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let g = random_lr(12, 9, 3, &mut rng);
        let dense = g.materialize().norm();
        assert!((lr_frobenius(&g) - dense).abs() < 1e-12 * dense);
    }

    #[test]
    fn add_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let f = random_lr(15, 11, 3, &mut rng);
        let g = random_lr(15, 11, 2, &mut rng);
        let sum = lr_add(&f, &g).unwrap();
        assert_eq!(sum.rank(), 5);
        assert!((sum.materialize() - f.materialize() - g.materialize()).norm() < 1e-12);

        let cancel = lr_add(&f, &f.scaled(-1.0)).unwrap();
        let norm = lr_frobenius(&f);
        let t = truncate(&cancel, 1e-12 * norm).unwrap();
        assert!(lr_frobenius(&t) <= 1e-10 * norm);

        let e1 = vec![1.0, 0.0, 0.0];
        let e2 = vec![0.0, 1.0, 0.0];
        let a = LowRankFactors::from_outer_products(&[(e1.clone(), e1, 2.0)]).unwrap();
        let b = LowRankFactors::from_outer_products(&[(e2.clone(), e2, 0.5)]).unwrap();
        let t = truncate(&lr_add(&a, &b).unwrap(), 0.0).unwrap();
        assert!((t.s()[(0, 0)] - 2.0).abs() < 1e-15 && (t.s()[(1, 1)] - 0.5).abs() < 1e-15);

        assert!(lr_add(&f, &random_lr(15, 10, 1, &mut rng)).is_err());
    }

    /// Midpoint quadrature on the materialized grid.
    fn dense_moments(m: &DMatrix<f64>, g1: &[f64], g2: &[f64], area: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for i in 0..g1.len() {
            for j in 0..g2.len() {
                let f = m[(i, j)] * area;
                out[0] += f;
                out[1] += g1[i] * f;
                out[2] += g2[j] * f;
                out[3] += 0.5 * (g1[i] * g1[i] + g2[j] * g2[j]) * f;
            }
        }
        out
    }

    fn maxwellian_1d(grid: &[f64], u: f64, t: f64) -> Vec<f64> {
        grid.iter()
            .map(|v| (-(v - u) * (v - u) / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt())
            .collect()
    }

    #[test]
    fn maxwellian_moments() {
        let n = 256;
        let dv = 20.0 / n as f64;
        let grid: Vec<f64> = (0..n).map(|i| -10.0 + (i as f64 + 0.5) * dv).collect();
        let x = maxwellian_1d(&grid, 0.0, 1.0);
        let f = LowRankFactors::from_outer_products(&[(x.clone(), x.clone(), 1.0)]).unwrap();
        let m = lr_moments(&f, &grid, &grid, dv * dv).unwrap();
        let oracle = dense_moments(&f.materialize(), &grid, &grid, dv * dv);
        assert!((m.density - 1.0).abs() < 1e-8);
        assert!(m.flux[0].abs() < 1e-12 && m.flux[1].abs() < 1e-12);
        assert!((m.energy - 1.0).abs() < 1e-6);
        for (a, b) in m.as_array().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }

        let xs = maxwellian_1d(&grid, 2.0, 1.0);
        let shifted = LowRankFactors::from_outer_products(&[(xs, x, 1.0)]).unwrap();
        let ms = lr_moments(&shifted, &grid, &grid, dv * dv).unwrap();
        let oracle = dense_moments(&shifted.materialize(), &grid, &grid, dv * dv);
        assert!((ms.flux[0] - 2.0 * ms.density).abs() < 1e-8);
        assert!((ms.flux[0] - oracle[1]).abs() < 1e-12);

        let zero = LowRankFactors::zero(n, n);
        assert_eq!(lr_moments(&zero, &grid, &grid, dv * dv).unwrap().as_array(), [0.0; 4]);
        assert!(lr_moments(&zero, &grid[1..], &grid, 1.0).is_err());
    }

    #[test]
    fn moments_are_linear_over_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let g1: Vec<f64> = (0..17).map(|i| i as f64 * 0.3 - 2.0).collect();
        let g2: Vec<f64> = (0..13).map(|i| i as f64 * 0.5 - 3.0).collect();
        for _ in 0..64 {
            let f = random_lr(17, 13, rng.random_range(1..4), &mut rng);
            let g = random_lr(17, 13, rng.random_range(1..4), &mut rng);
            let sum = lr_moments(&lr_add(&f, &g).unwrap(), &g1, &g2, 0.15).unwrap();
            let parts = lr_moments(&f, &g1, &g2, 0.15).unwrap() + lr_moments(&g, &g1, &g2, 0.15).unwrap();
            for (a, b) in sum.as_array().iter().zip(parts.as_array()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
