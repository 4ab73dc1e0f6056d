//! Modified Gram–Schmidt with one re-orthogonalization pass and column deflation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Columns whose orthogonalized norm falls below this fraction of `‖M‖_F` are dropped.
pub const DEFLATION_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Result of orthogonalizing a block of columns against an orthonormal basis.
#[derive(Debug, Clone)]
pub struct BlockExtension {
    /// New orthonormal columns (`n × k'`), orthogonal to the existing basis.
    pub q: DMatrix<f64>,
    /// Coefficients against the existing basis (`k_old × k`).
    pub r_old: DMatrix<f64>,
    /// Coefficients against the new columns (`k' × k`).
    pub r_new: DMatrix<f64>,
}

/// Orthogonalizes the columns of `w` against the orthonormal columns of
/// `basis` and against each other. Two passes of modified Gram–Schmidt are
/// applied per column. A column is dropped when its remaining norm is at
/// most `tol · ‖w‖_F`; its projection coefficients are still recorded so that
/// `w = basis · r_old + q · r_new` up to the dropped remainders.
pub fn mgs_extend(basis: &DMatrix<f64>, w: &DMatrix<f64>, tol: f64) -> Result<BlockExtension> {
    let n = w.nrows();
    if basis.nrows() != n && basis.ncols() > 0 {
        return Err(Error::dims("mgs_extend", basis.nrows(), n));
    }
    let k_old = basis.ncols();
    let k = w.ncols();
    let threshold = tol * w.norm();
    let mut r_old = DMatrix::zeros(k_old, k);
    let mut new_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut r_new_rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    let old_cols: Vec<&[f64]> = if n == 0 {
        Vec::new()
    } else {
        basis.as_slice().chunks_exact(n).collect()
    };
    for j in 0..k {
        let mut v: Vec<f64> = w.column(j).iter().copied().collect();
        for _pass in 0..2 {
            for (i, q) in old_cols.iter().enumerate() {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
                r_old[(i, j)] += c;
            }
            for (i, q) in new_cols.iter().enumerate() {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
                r_new_rows[i][j] += c;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > threshold && norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            new_cols.push(v);
            let mut row = vec![0.0; k];
            row[j] = norm;
            r_new_rows.push(row);
        }
    }
    let kp = new_cols.len();
    let mut q = DMatrix::zeros(n, kp);
    for (j, col) in new_cols.iter().enumerate() {
        q.column_mut(j).copy_from_slice(col);
    }
    let r_new = DMatrix::from_fn(kp, k, |i, j| r_new_rows[i][j]);
    Ok(BlockExtension { q, r_old, r_new })
}

/// Reduced QR `M = Q R` by modified Gram–Schmidt. Near-dependent columns are
/// deflated, so `Q` is `n × k'` with `k' ≤ k` and `R` is `k' × k`.
pub fn mgs_qr(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if m.ncols() == 0 || m.nrows() < m.ncols() {
        return Err(Error::dims(
            "mgs_qr",
            "n >= k >= 1",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let ext = mgs_extend(&DMatrix::zeros(m.nrows(), 0), m, DEFLATION_TOL)?;
    Ok((ext.q, ext.r_new))
}

/// Same as [`mgs_qr`] but accepts wide inputs (`k > n`), which arise when
/// stacking `[U, A U]` for small grids.
pub(crate) fn mgs_qr_any(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let ext = mgs_extend(&DMatrix::zeros(m.nrows(), 0), m, DEFLATION_TOL)
        .expect("empty basis never mismatches");
    (ext.q, ext.r_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gram_error(q: &DMatrix<f64>) -> f64 {
        (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).norm()
    }

    #[test]
    fn orthonormal_input_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let (q0, _) = mgs_qr(&m).unwrap();
        let (q, r) = mgs_qr(&q0).unwrap();
        assert!((&q - &q0).norm() < 1e-13);
        assert!((r - DMatrix::identity(4, 4)).norm() < 1e-13);
    }

    #[test]
    fn duplicate_direction_deflates() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 2.0]);
        let m = DMatrix::from_columns(&[v.column(0), (v.clone() * 2.0).column(0)]);
        let (q, r) = mgs_qr(&m).unwrap();
        assert_eq!(q.ncols(), 1);
        assert_eq!(r.shape(), (1, 2));
        assert!((r[(0, 0)] - 3.0).abs() < 1e-14);
        assert!((r[(0, 1)] - 6.0).abs() < 1e-14);
        assert!((&q * &r - &m).norm() < 1e-14);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = DMatrix::from_fn(100, 8, |_, _| rng.random_range(-1.0..1.0));
        let (q, r) = mgs_qr(&m).unwrap();
        assert_eq!(q.ncols(), 8);
        assert!(gram_error(&q) < 1e-12);
        assert!((&q * &r - &m).norm() / m.norm() < 1e-12);
        for i in 0..8 {
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn rejects_wide_or_empty() {
        assert!(mgs_qr(&DMatrix::zeros(2, 3)).is_err());
        assert!(mgs_qr(&DMatrix::zeros(2, 0)).is_err());
    }

    #[test]
    fn extension_is_orthogonal_to_basis() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (basis, _) = mgs_qr(&DMatrix::from_fn(50, 5, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let w = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-1.0..1.0));
        let ext = mgs_extend(&basis, &w, DEFLATION_TOL).unwrap();
        assert!((basis.transpose() * &ext.q).norm() < 1e-14);
        let recon = &basis * &ext.r_old + &ext.q * &ext.r_new;
        assert!((recon - w).norm() < 1e-13);
    }
}
