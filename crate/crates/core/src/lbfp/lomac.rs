//! Conservative projection onto the mass, momentum and energy subspace under
//! a Maxwellian-weighted inner product.

use nalgebra::DMatrix;

use super::VelocityGrid;
use crate::error::{Error, Result};
use crate::lowrank::{lr_add, lr_moments, truncate, LowRankFactors, Moments};

/// Weighted orthonormal polynomials `e₀, e₁, e₂` on a velocity grid.
///
/// With `ωᵢ = w(vᵢ)Δv`, `w(v) = exp(−v²/(2v_th²))`, the `e_k` satisfy
/// `Σᵢ ωᵢ e_k(vᵢ) e_l(vᵢ) = δ_kl`. They are stored as coefficients in the
/// scaled variable `ξ = v/v_th`.
#[derive(Debug, Clone)]
pub struct WeightedBasis {
    vth: f64,
    /// `poly[k][p]`: coefficient of `ξᵖ` in `e_k`.
    poly: [[f64; 3]; 3],
    /// `N × 3` matrix with columns `w(vᵢ) e_k(vᵢ)`.
    columns: DMatrix<f64>,
}

impl WeightedBasis {
    pub fn new(grid: &VelocityGrid, vth: f64) -> Result<Self> {
        if !(vth > 0.0) {
            return Err(Error::InvalidInput(format!("thermal velocity {vth} must be positive")));
        }
        let xi: Vec<f64> = grid.nodes().iter().map(|v| v / vth).collect();
        let w: Vec<f64> = xi.iter().map(|x| (-0.5 * x * x).exp()).collect();
        let mut mu = [0.0; 5];
        for (x, wi) in xi.iter().zip(&w) {
            let omega = wi * grid.dv();
            let mut p = 1.0;
            for m in mu.iter_mut() {
                *m += omega * p;
                p *= x;
            }
        }
        let inner = |a: &[f64; 3], b: &[f64; 3]| -> f64 {
            let mut s = 0.0;
            for p in 0..3 {
                for q in 0..3 {
                    s += a[p] * b[q] * mu[p + q];
                }
            }
            s
        };
        let mut poly = [[0.0; 3]; 3];
        for k in 0..3 {
            let mut e = [0.0; 3];
            e[k] = 1.0;
            for _pass in 0..2 {
                for prev in poly.iter().take(k) {
                    let c = inner(prev, &e);
                    for p in 0..3 {
                        e[p] -= c * prev[p];
                    }
                }
            }
            let norm = inner(&e, &e).sqrt();
            if !(norm > 0.0) {
                return Err(Error::InvalidInput("velocity grid too coarse for the weighted basis".into()));
            }
            poly[k] = e.map(|c| c / norm);
        }
        let columns = DMatrix::from_fn(xi.len(), 3, |i, k| {
            let x = xi[i];
            w[i] * (poly[k][0] + poly[k][1] * x + poly[k][2] * x * x)
        });
        Ok(WeightedBasis { vth, poly, columns })
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Projection coefficients `c_k = Δv² Σ F q_k` of a distribution with
    /// moments `m`, for `q₀ = e₀⊗e₀`, `q₁ = e₁⊗e₀`, `q₂ = e₀⊗e₁`,
    /// `q₃ = (e₂⊗e₀ + e₀⊗e₂)/√2`.
    pub fn coefficients(&self, m: &Moments) -> [f64; 4] {
        let p = &self.poly;
        let s = self.vth;
        let m00 = m.density;
        let m10 = m.flux[0] / s;
        let m01 = m.flux[1] / s;
        let m2 = 2.0 * m.energy / (s * s);
        [
            p[0][0] * p[0][0] * m00,
            p[0][0] * (p[1][0] * m00 + p[1][1] * m10),
            p[0][0] * (p[1][0] * m00 + p[1][1] * m01),
            p[0][0] * (2.0 * p[2][0] * m00 + p[2][1] * (m10 + m01) + p[2][2] * m2) / std::f64::consts::SQRT_2,
        ]
    }

    /// `3 × 3` core of the projected distribution in the basis [`Self::columns`].
    pub fn core(&self, c: &[f64; 4]) -> DMatrix<f64> {
        let mut core = DMatrix::zeros(3, 3);
        core[(0, 0)] = c[0];
        core[(1, 0)] = c[1];
        core[(0, 1)] = c[2];
        core[(2, 0)] = c[3] / std::f64::consts::SQRT_2;
        core[(0, 2)] = c[3] / std::f64::consts::SQRT_2;
        core
    }

    /// Distribution in the projection subspace with moments `m`.
    pub fn macroscopic(&self, m: &Moments) -> LowRankFactors {
        LowRankFactors::new(self.columns.clone(), self.core(&self.coefficients(m)), self.columns.clone())
            .expect("basis and core dimensions agree")
    }
}

/// `P_𝓛(F)`: the weighted projection of `F`, which carries the same discrete
/// mass, momentum and energy as `F`.
pub fn macroscopic_projection(f: &LowRankFactors, grid: &VelocityGrid, basis: &WeightedBasis) -> Result<LowRankFactors> {
    let m = lr_moments(f, grid.nodes(), grid.nodes(), grid.cell_area())?;
    Ok(basis.macroscopic(&m))
}

/// Replaces the macroscopic part of `F` with the one carrying the `exact`
/// moments and truncates the remainder at `eps`. The truncated remainder is
/// projected back onto the zero-moment complement, so the output moments
/// equal `exact` to roundoff. The result has orthonormal factors.
pub fn lomac_project(
    f: &LowRankFactors,
    exact: &Moments,
    grid: &VelocityGrid,
    mass: f64,
    eps: f64,
) -> Result<LowRankFactors> {
    let (n1, n2) = f.shape();
    if n1 != grid.len() || n2 != grid.len() {
        return Err(Error::dims("lomac_project", format!("{0}x{0}", grid.len()), format!("{n1}x{n2}")));
    }
    let t = exact.temperature(mass);
    if !(exact.density > 0.0) || !(t > 0.0) {
        return Err(Error::InvalidInput(format!("invalid target moments {exact:?}")));
    }
    let basis = WeightedBasis::new(grid, (t / mass).sqrt())?;
    let f1 = macroscopic_projection(f, grid, &basis)?;
    let f2 = truncate(&lr_add(f, &f1.scaled(-1.0))?, eps)?;
    let residual = lr_moments(&f2, grid.nodes(), grid.nodes(), grid.cell_area())?;
    let core = basis.core(&basis.coefficients(exact)) - basis.core(&basis.coefficients(&residual));
    let macro_part = LowRankFactors::new(basis.columns().clone(), core, basis.columns().clone())?;
    Ok(lr_add(&macro_part, &f2)?.orthonormalized())
}
