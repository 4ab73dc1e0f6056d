use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{mgs_extend, mgs_qr_any, TridiagonalOperator, DEFLATION_TOL};

/// Orthonormal basis of the extended Krylov space
/// `span[U₀, A U₀, A⁻¹U₀, …, Aᵐ U₀, A⁻ᵐ U₀]`.
#[derive(Debug, Clone)]
pub struct ExtendedKrylovBasis {
    q: DMatrix<f64>,
    m: usize,
    seed_rank: usize,
    forward: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl ExtendedKrylovBasis {
    /// Starts from the orthonormalized columns of `u0`.
    pub fn new(u0: &DMatrix<f64>) -> Result<Self> {
        if u0.ncols() == 0 || u0.nrows() == 0 {
            return Err(Error::dims("ExtendedKrylovBasis::new", "non-empty seed", format!("{:?}", u0.shape())));
        }
        let (q, _) = mgs_qr_any(u0);
        let q = if q.ncols() == 0 {
            // Zero seed: any unit vector spans the (trivial) column space.
            let mut e = DMatrix::zeros(u0.nrows(), 1);
            e[(0, 0)] = 1.0;
            e
        } else {
            q
        };
        Ok(ExtendedKrylovBasis {
            forward: q.clone(),
            inverse: q.clone(),
            q,
            m: 0,
            seed_rank: u0.ncols(),
        })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed_rank(&self) -> usize {
        self.seed_rank
    }

    /// Number of basis columns `rₘ`.
    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    /// Appends the orthonormalized blocks `A·forward` and `A⁻¹·inverse`.
    ///
    /// Returns [`Error::BasisSaturated`] when neither block contributes a new
    /// direction; the basis is left unchanged apart from the iteration count.
    pub fn grow(&mut self, a: &TridiagonalOperator) -> Result<()> {
        if a.n() != self.q.nrows() {
            return Err(Error::dims("grow_basis", self.q.nrows(), a.n()));
        }
        self.m += 1;
        let wf = if self.forward.ncols() > 0 {
            a.apply(&self.forward)?
        } else {
            DMatrix::zeros(self.q.nrows(), 0)
        };
        let wi = if self.inverse.ncols() > 0 {
            a.solve(&self.inverse)?
        } else {
            DMatrix::zeros(self.q.nrows(), 0)
        };
        let fwd = mgs_extend(&self.q, &wf, DEFLATION_TOL)?.q;
        let q_mid = hcat(&self.q, &fwd);
        let inv = mgs_extend(&q_mid, &wi, DEFLATION_TOL)?.q;
        if fwd.ncols() == 0 && inv.ncols() == 0 {
            self.forward = fwd;
            self.inverse = inv;
            return Err(Error::BasisSaturated { dim: self.q.ncols() });
        }
        self.q = hcat(&q_mid, &inv);
        self.forward = fwd;
        self.inverse = inv;
        Ok(())
    }
}

/// Functional form of [`ExtendedKrylovBasis::grow`].
pub fn grow_basis(mut basis: ExtendedKrylovBasis, a: &TridiagonalOperator) -> Result<ExtendedKrylovBasis> {
    basis.grow(a)?;
    Ok(basis)
}

pub(crate) fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}
