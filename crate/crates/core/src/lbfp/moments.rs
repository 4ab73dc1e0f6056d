//! Moment equations of the multi-species LBFP system and their implicit
//! integration.

use nalgebra::{DMatrix, DVector};

use super::Species;
use crate::dirk::ButcherTable;
use crate::error::{Error, Result};
use crate::lowrank::Moments;

/// Alias used where a [`Moments`] value describes a species state.
pub type MomentState = Moments;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
const FD_STEP: f64 = 1e-7;

/// Pairwise collision coefficients, indexed `[α][β]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionCoefficients {
    pub nu: Vec<Vec<f64>>,
    pub diffusion: Vec<Vec<f64>>,
    pub drift: Vec<Vec<[f64; 2]>>,
    pub temperature: Vec<Vec<f64>>,
}

impl CollisionCoefficients {
    pub fn species_count(&self) -> usize {
        self.nu.len()
    }
}

fn check_states(states: &[MomentState], species: &[Species]) -> Result<()> {
    if states.len() != species.len() || states.is_empty() {
        return Err(Error::dims("collision_coefficients", species.len(), states.len()));
    }
    for (a, (s, sp)) in states.iter().zip(species).enumerate() {
        if !(s.density > 0.0) || !s.as_array().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!("species {a} has an invalid state {s:?}")));
        }
        if !(s.temperature(sp.mass) > 0.0) {
            return Err(Error::InvalidInput(format!("species {a} has non-positive temperature")));
        }
    }
    Ok(())
}

/// `ν_αβ = 2^{5/2} e_α² e_β² n_β m_β/(m_α+m_β) (v_th,α + v_th,β)^{−3/2}`,
/// `T_αβ = (m_α T_β + m_β T_α)/(m_α+m_β) + m_α m_β/(4(m_α+m_β)) |u_β − u_α|²`,
/// `D_αβ = T_αβ/m_α` and `u_αβ = (u_α + u_β)/2`.
pub fn collision_coefficients(states: &[MomentState], species: &[Species]) -> Result<CollisionCoefficients> {
    check_states(states, species)?;
    let ns = states.len();
    let temps: Vec<f64> = states.iter().zip(species).map(|(s, sp)| s.temperature(sp.mass)).collect();
    let drifts: Vec<[f64; 2]> = states.iter().map(|s| s.drift()).collect();
    let vth: Vec<f64> = temps.iter().zip(species).map(|(t, sp)| (t / sp.mass).sqrt()).collect();
    let mut c = CollisionCoefficients {
        nu: vec![vec![0.0; ns]; ns],
        diffusion: vec![vec![0.0; ns]; ns],
        drift: vec![vec![[0.0; 2]; ns]; ns],
        temperature: vec![vec![0.0; ns]; ns],
    };
    for a in 0..ns {
        for b in 0..ns {
            let (ma, mb) = (species[a].mass, species[b].mass);
            let msum = ma + mb;
            let e2 = species[a].charge.powi(2) * species[b].charge.powi(2);
            c.nu[a][b] = 2f64.powf(2.5) * e2 * states[b].density * (mb / msum) * (vth[a] + vth[b]).powf(-1.5);
            let du = [drifts[b][0] - drifts[a][0], drifts[b][1] - drifts[a][1]];
            let t = (ma * temps[b] + mb * temps[a]) / msum + 0.25 * (ma * mb / msum) * (du[0] * du[0] + du[1] * du[1]);
            let d = t / ma;
            if !(d > 0.0) {
                return Err(Error::NonPositiveDiffusion { alpha: a, beta: b, value: d });
            }
            c.temperature[a][b] = t;
            c.diffusion[a][b] = d;
            c.drift[a][b] = [
                0.5 * (drifts[a][0] + drifts[b][0]),
                0.5 * (drifts[a][1] + drifts[b][1]),
            ];
        }
    }
    Ok(c)
}

/// Time derivatives `(∂ₜn, ∂ₜγ¹, ∂ₜγ², ∂ₜℰ)` per species from inter-species
/// collisions (self-collisions conserve all four moments).
pub fn moment_rhs(states: &[MomentState], species: &[Species]) -> Result<Vec<[f64; 4]>> {
    let c = collision_coefficients(states, species)?;
    let ns = states.len();
    let drifts: Vec<[f64; 2]> = states.iter().map(|s| s.drift()).collect();
    Ok((0..ns)
        .map(|a| {
            let s = &states[a];
            let mut d = [0.0; 4];
            for b in (0..ns).filter(|&b| b != a) {
                let nu = c.nu[a][b];
                let (ua, ub) = (drifts[a], drifts[b]);
                d[1] += 0.5 * nu * s.density * (ub[0] - ua[0]);
                d[2] += 0.5 * nu * s.density * (ub[1] - ua[1]);
                let gu = s.flux[0] * (ua[0] + ub[0]) + s.flux[1] * (ua[1] + ub[1]);
                d[3] += nu * (2.0 * c.diffusion[a][b] * s.density - 2.0 * s.energy + 0.5 * gu);
            }
            d
        })
        .collect())
}

/// Mass-weighted equilibrium drift `ū` and temperature `T̄`.
pub fn equilibrium_state(states: &[MomentState], species: &[Species]) -> Result<([f64; 2], f64)> {
    check_states(states, species)?;
    let mn: f64 = states.iter().zip(species).map(|(s, sp)| sp.mass * s.density).sum();
    let mut u = [0.0; 2];
    for (s, sp) in states.iter().zip(species) {
        u[0] += sp.mass * s.flux[0] / mn;
        u[1] += sp.mass * s.flux[1] / mn;
    }
    let mut kinetic = 0.0;
    let mut thermal = 0.0;
    let mut n = 0.0;
    for (s, sp) in states.iter().zip(species) {
        let ua = s.drift();
        kinetic += 0.5 * sp.mass * s.density * (ua[0] * ua[0] + ua[1] * ua[1]);
        thermal += s.density * s.temperature(sp.mass);
        n += s.density;
    }
    let t = (kinetic + thermal - 0.5 * (u[0] * u[0] + u[1] * u[1]) * mn) / n;
    Ok((u, t))
}

/// Stage and step-end moments of one implicit step of the moment system.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSolve {
    pub stages: Vec<Vec<MomentState>>,
    pub end: Vec<MomentState>,
    pub newton_iterations: Vec<usize>,
}

fn flatten(states: &[MomentState]) -> Vec<f64> {
    states.iter().flat_map(|s| s.as_array()).collect()
}

fn unflatten(y: &[f64]) -> Vec<MomentState> {
    y.chunks_exact(4)
        .map(|c| Moments::from_array([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn rhs_flat(y: &[f64], species: &[Species]) -> Result<Vec<f64>> {
    Ok(moment_rhs(&unflatten(y), species)?.into_iter().flatten().collect())
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `y − base − h f(y) = 0` by Newton's method with a forward-difference Jacobian.
fn newton_stage(base: &[f64], h: f64, guess: &[f64], species: &[Species]) -> Result<(Vec<f64>, usize)> {
    let dim = base.len();
    let residual = |y: &[f64]| -> Result<Vec<f64>> {
        let f = rhs_flat(y, species)?;
        Ok((0..dim).map(|i| y[i] - base[i] - h * f[i]).collect())
    };
    let mut y = guess.to_vec();
    let mut history = Vec::new();
    for it in 0..=NEWTON_MAX_ITER {
        let g = residual(&y)?;
        let gn = inf_norm(&g);
        history.push(gn);
        if gn <= NEWTON_TOL * inf_norm(&y).max(1.0) {
            return Ok((y, it));
        }
        if it == NEWTON_MAX_ITER || !gn.is_finite() {
            break;
        }
        let mut jac = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let step = FD_STEP * (1.0 + y[j].abs());
            let mut yp = y.clone();
            yp[j] += step;
            let gp = residual(&yp)?;
            for i in 0..dim {
                jac[(i, j)] = (gp[i] - g[i]) / step;
            }
        }
        let delta = jac
            .lu()
            .solve(&DVector::from_iterator(dim, g.iter().map(|v| -v)))
            .ok_or(Error::NewtonDivergence {
                iterations: it + 1,
                history: history.clone(),
            })?;
        for i in 0..dim {
            y[i] += delta[i];
        }
    }
    Err(Error::NewtonDivergence {
        iterations: history.len(),
        history,
    })
}

/// One implicit DIRK step of the moment system. The step-end state is
/// assembled as `yₙ + Δt Σ b_k f(Y_k)`, which keeps the mass-weighted totals
/// conserved to roundoff independently of the Newton tolerance.
pub fn moment_dirk_solve(
    states: &[MomentState],
    species: &[Species],
    dt: f64,
    table: &ButcherTable,
) -> Result<MomentSolve> {
    check_states(states, species)?;
    let y0 = flatten(states);
    let s = table.stages();
    let mut derivs: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut stages = Vec::with_capacity(s);
    let mut newton_iterations = Vec::with_capacity(s);
    let mut guess = y0.clone();
    for k in 0..s {
        let mut base = y0.clone();
        for (l, f) in derivs.iter().enumerate() {
            let c = dt * table.a(k, l);
            base.iter_mut().zip(f).for_each(|(b, fi)| *b += c * fi);
        }
        let (yk, its) = newton_stage(&base, dt * table.a(k, k), &guess, species)?;
        derivs.push(rhs_flat(&yk, species)?);
        stages.push(unflatten(&yk));
        newton_iterations.push(its);
        guess = yk;
    }
    let mut end = y0;
    for (k, f) in derivs.iter().enumerate() {
        let c = dt * table.b()[k];
        end.iter_mut().zip(f).for_each(|(e, fi)| *e += c * fi);
    }
    Ok(MomentSolve {
        stages,
        end: unflatten(&end),
        newton_iterations,
    })
}
