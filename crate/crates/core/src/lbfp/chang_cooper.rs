//! Chang–Cooper discretization of the one-dimensional LBFP drift-diffusion
//! operator with zero-flux boundaries.

use super::moments::CollisionCoefficients;
use super::VelocityGrid;
use crate::error::{Error, Result};
use crate::linalg::TridiagonalOperator;

const SERIES_CUTOFF: f64 = 1e-6;

/// `δ(w) = 1/w − 1/(eʷ − 1)`, the Chang–Cooper interpolation weight.
pub fn chang_cooper_delta(w: f64) -> f64 {
    if w.abs() < SERIES_CUTOFF {
        0.5 - w / 12.0 + w * w * w / 720.0
    } else {
        1.0 / w - 1.0 / w.exp_m1()
    }
}

/// Tridiagonal operators `(A₁, A₂)` of species `alpha` such that the
/// collision operator acts as `F ↦ A₁F + FA₂ᵀ`, summed over all partners `β`
/// including `alpha` itself.
///
/// The face flux `Σ_β ν_αβ [D_αβ ∂ᵥf + (v − u_αβ) f]` is discretized with
/// `f_{i+½} = (1 − δ) f_{i+1} + δ f_i` and vanishes on both boundary faces,
/// so every column sums to zero.
pub fn build_lbfp_operators(
    alpha: usize,
    coeffs: &CollisionCoefficients,
    grid: &VelocityGrid,
) -> Result<(TridiagonalOperator, TridiagonalOperator)> {
    if alpha >= coeffs.species_count() {
        return Err(Error::InvalidInput(format!("species index {alpha} out of range")));
    }
    for (b, &d) in coeffs.diffusion[alpha].iter().enumerate() {
        if !(d > 0.0) {
            return Err(Error::NonPositiveDiffusion { alpha, beta: b, value: d });
        }
    }
    let a1 = direction_operator(alpha, coeffs, grid, 0)?;
    let a2 = direction_operator(alpha, coeffs, grid, 1)?;
    Ok((a1, a2))
}

fn direction_operator(
    alpha: usize,
    coeffs: &CollisionCoefficients,
    grid: &VelocityGrid,
    dir: usize,
) -> Result<TridiagonalOperator> {
    let n = grid.len();
    let dv = grid.dv();
    let v = grid.nodes();
    // Coefficients of f_{i+1} (p) and f_i (q) in the flux through face i+½.
    let mut p = vec![0.0; n - 1];
    let mut q = vec![0.0; n - 1];
    for f in 0..n - 1 {
        let face = 0.5 * (v[f] + v[f + 1]);
        for b in 0..coeffs.species_count() {
            let nu = coeffs.nu[alpha][b];
            let d = coeffs.diffusion[alpha][b];
            let a = face - coeffs.drift[alpha][b][dir];
            let delta = chang_cooper_delta(dv * a / d);
            p[f] += nu * (d / dv + a * (1.0 - delta));
            q[f] += nu * (-d / dv + a * delta);
        }
    }
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        if i + 1 < n {
            upper[i] = p[i] / dv;
            diag[i] += q[i] / dv;
        }
        if i > 0 {
            lower[i] = -q[i - 1] / dv;
            diag[i] -= p[i - 1] / dv;
        }
    }
    TridiagonalOperator::new(lower, diag, upper)
}
