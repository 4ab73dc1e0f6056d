use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Thin SVD of a small dense core: `S = T1 · diag(sigma) · T2ᵀ` with
/// `sigma` sorted in non-increasing order.
#[derive(Debug, Clone)]
pub struct ReducedSvd {
    pub left: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub right: DMatrix<f64>,
}

pub fn reduced_svd(s: &DMatrix<f64>) -> Result<ReducedSvd> {
    let (m, k) = s.shape();
    let p = m.min(k);
    if p == 0 {
        return Ok(ReducedSvd {
            left: DMatrix::zeros(m, 0),
            sigma: Vec::new(),
            right: DMatrix::zeros(k, 0),
        });
    }
    let a = faer::Mat::<f64>::from_fn(m, k, |i, j| s[(i, j)]);
    let svd = a.thin_svd().map_err(|_| Error::ConvergenceFailure("reduced SVD"))?;
    let (u, d, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| d[y].total_cmp(&d[x]));
    let left = DMatrix::from_fn(m, p, |i, c| u[(i, order[c])]);
    let right = DMatrix::from_fn(k, p, |i, c| v[(i, order[c])]);
    let sigma = order.iter().map(|&c| d[c]).collect();
    Ok(ReducedSvd { left, sigma, right })
}
