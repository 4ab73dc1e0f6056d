//! Dense Bartels–Stewart solver for `A1 X + X A2ᵀ = B`.
//!
//! Both coefficient matrices are reduced to real Schur form once; each solve
//! then transforms the right-hand side, runs a block back-substitution over the
//! quasi-triangular factors (1×1 and 2×2 diagonal blocks) and transforms back.

use nalgebra::{DMatrix, Schur};

use crate::error::{Error, Result};

/// Relative residual accepted by the a-posteriori check.
pub const SYLVESTER_RESIDUAL_TOL: f64 = 1e-10;

/// Iterations per unit of dimension allowed for each QR-sweep attempt.
const SCHUR_ITER_PER_DIM: usize = 200;
/// Deflation thresholds tried in turn, in multiples of machine epsilon. Plain
/// ε occasionally stagnates on tightly clustered spectra.
/// Relative reconstruction error `‖QTQᵀ − A‖_F/‖A‖_F` accepted from the QR sweep.
const SCHUR_RECONSTRUCTION_TOL: f64 = 1e-11;
const SCHUR_EPS_LADDER: [f64; 4] = [1.0, 8.0, 64.0, 512.0];

#[derive(Debug, Clone)]
struct RealSchur {
    q: DMatrix<f64>,
    t: DMatrix<f64>,
    /// Diagonal blocks as `(start, len)`, in increasing order.
    blocks: Vec<(usize, usize)>,
}

impl RealSchur {
    fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let max_iter = SCHUR_ITER_PER_DIM * n.max(1);
        let scale = a.norm().max(f64::MIN_POSITIVE);
        let (q, mut t) = SCHUR_EPS_LADDER
            .iter()
            .filter_map(|k| Schur::try_new(a.clone(), k * f64::EPSILON, max_iter))
            .map(|s| s.unpack())
            .find(|(q, t)| (q * t * q.transpose() - a).norm() <= SCHUR_RECONSTRUCTION_TOL * scale)
            .ok_or(Error::ConvergenceFailure("real Schur decomposition"))?;
        for j in 0..n {
            for i in j + 2..n {
                t[(i, j)] = 0.0;
            }
        }
        let mut blocks = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n {
                let sub = t[(end, end - 1)];
                let scale = t[(end, end)].abs() + t[(end - 1, end - 1)].abs();
                if sub != 0.0 && sub.abs() > f64::EPSILON * scale {
                    end += 1;
                } else {
                    t[(end, end - 1)] = 0.0;
                    break;
                }
            }
            blocks.push((start, end - start));
            start = end;
        }
        Ok(RealSchur { q, t, blocks })
    }
}

/// Bartels–Stewart solver with both Schur factorizations cached, so repeated
/// right-hand sides cost `O(m²k + mk²)` each.
#[derive(Debug, Clone)]
pub struct DenseSylvester {
    a1: DMatrix<f64>,
    a2: DMatrix<f64>,
    s1: RealSchur,
    s2: RealSchur,
}

impl DenseSylvester {
    pub fn new(a1: &DMatrix<f64>, a2: &DMatrix<f64>) -> Result<Self> {
        if !a1.is_square() || !a2.is_square() {
            return Err(Error::dims(
                "solve_sylvester_dense",
                "square A1, A2",
                format!("{:?}, {:?}", a1.shape(), a2.shape()),
            ));
        }
        if a1.iter().chain(a2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Sylvester coefficients"));
        }
        Ok(DenseSylvester {
            s1: RealSchur::new(a1)?,
            s2: RealSchur::new(a2)?,
            a1: a1.clone(),
            a2: a2.clone(),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.a1.nrows(), self.a2.nrows())
    }

    /// Solves and verifies `‖A1X + XA2ᵀ − B‖_F ≤ tol · (‖A1‖ + ‖A2‖) · ‖X‖_F`.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let x = self.solve_unchecked(b)?;
        let residual = (&self.a1 * &x + &x * self.a2.transpose() - b).norm();
        let scale = (self.a1.norm() + self.a2.norm()) * x.norm();
        if !(residual <= SYLVESTER_RESIDUAL_TOL * scale) {
            let relative_residual = if scale > 0.0 { residual / scale } else { f64::INFINITY };
            return Err(Error::SpectralOverlap { relative_residual });
        }
        Ok(x)
    }

    /// Solves without the a-posteriori residual check.
    pub fn solve_unchecked(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (m, k) = self.dims();
        if b.shape() != (m, k) {
            return Err(Error::dims(
                "solve_sylvester_dense",
                format!("{m}x{k}"),
                format!("{}x{}", b.nrows(), b.ncols()),
            ));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Sylvester right-hand side"));
        }
        let c = self.s1.q.transpose() * b * &self.s2.q;
        let y = self.solve_quasi_triangular(c)?;
        Ok(&self.s1.q * y * self.s2.q.transpose())
    }

    /// Solves `T1 Y + Y T2ᵀ = C` for quasi-upper-triangular `T1`, `T2`.
    fn solve_quasi_triangular(&self, mut c: DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (m, k) = self.dims();
        let t1 = &self.s1.t;
        let t2 = &self.s2.t;
        let mut y = DMatrix::<f64>::zeros(m, k);
        for &(j0, q) in self.s2.blocks.iter().rev() {
            // Coupling to already solved columns: (Y T2ᵀ)[:, j] includes Y[:, l] T2[j, l] for l > j.
            for l in j0 + q..k {
                for jj in j0..j0 + q {
                    let coef = t2[(jj, l)];
                    if coef != 0.0 {
                        let (yl, mut cj) = (y.column(l), c.column_mut(jj));
                        cj.axpy(-coef, &yl, 1.0);
                    }
                }
            }
            for &(i0, p) in self.s1.blocks.iter().rev() {
                if p == 1 && q == 1 {
                    let denom = t1[(i0, i0)] + t2[(j0, j0)];
                    let scale = t1[(i0, i0)].abs() + t2[(j0, j0)].abs();
                    if !(denom.abs() > f64::EPSILON * scale) || denom == 0.0 {
                        return Err(Error::SpectralOverlap {
                            relative_residual: f64::INFINITY,
                        });
                    }
                    y[(i0, j0)] = c[(i0, j0)] / denom;
                } else {
                    let block = small_sylvester(t1, i0, p, t2, j0, q, &c)?;
                    for jj in 0..q {
                        for ii in 0..p {
                            y[(i0 + ii, j0 + jj)] = block[ii + jj * p];
                        }
                    }
                }
                // Eliminate the solved block from rows above: c[0..i0, j] -= T1[0..i0, I] Y[I, j].
                for jj in j0..j0 + q {
                    for ii in i0..i0 + p {
                        let yv = y[(ii, jj)];
                        if yv != 0.0 {
                            for r in 0..i0 {
                                c[(r, jj)] -= t1[(r, ii)] * yv;
                            }
                        }
                    }
                }
            }
        }
        Ok(y)
    }
}

/// Solves the `p×q` block equation `T1_II Y + Y T2_JJᵀ = C_IJ` by vectorization.
fn small_sylvester(
    t1: &DMatrix<f64>,
    i0: usize,
    p: usize,
    t2: &DMatrix<f64>,
    j0: usize,
    q: usize,
    c: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let dim = p * q;
    let mut kmat = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = nalgebra::DVector::<f64>::zeros(dim);
    for j in 0..q {
        for i in 0..p {
            let row = i + j * p;
            rhs[row] = c[(i0 + i, j0 + j)];
            for ip in 0..p {
                kmat[(row, ip + j * p)] += t1[(i0 + i, i0 + ip)];
            }
            for jp in 0..q {
                kmat[(row, i + jp * p)] += t2[(j0 + j, j0 + jp)];
            }
        }
    }
    let sol = kmat
        .lu()
        .solve(&rhs)
        .ok_or(Error::SpectralOverlap {
            relative_residual: f64::INFINITY,
        })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SpectralOverlap {
            relative_residual: f64::INFINITY,
        });
    }
    Ok(sol.iter().copied().collect())
}

/// One-shot dense solve of `A1 X + X A2ᵀ = B`.
pub fn solve_sylvester_dense(
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    DenseSylvester::new(a1, a2)?.solve(b)
}
