//! Dense and banded kernels: tridiagonal factor/solve, modified Gram–Schmidt,
//! thin SVD of small cores, and a Bartels–Stewart Sylvester solver.

mod qr;
mod svd;
mod sylvester;
mod tridiagonal;

pub use qr::{mgs_extend, mgs_qr, BlockExtension, DEFLATION_TOL};
pub(crate) use qr::mgs_qr_any;
pub use svd::{reduced_svd, ReducedSvd};
pub use sylvester::{solve_sylvester_dense, DenseSylvester, SYLVESTER_RESIDUAL_TOL};
pub use tridiagonal::{tridiag_solve, TridiagonalOperator, PIVOT_FLOOR};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense column-major `f64` matrix used for factors and small cores.
pub type DenseMatrix = DMatrix<f64>;

/// Rejects matrices containing NaN or infinite entries.
pub fn ensure_finite(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
