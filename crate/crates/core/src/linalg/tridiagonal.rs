//! Tridiagonal operators with optional periodic wrap entries.
//!
//! The operator stores three bands of length `n`:
//!
//! ```text
//! lower[i] = A[i][i-1]   (lower[0] is ignored)
//! diag[i]  = A[i][i]
//! upper[i] = A[i][i+1]   (upper[n-1] is ignored)
//! ```
//!
//! plus two optional wrap entries, `corner_hi = A[0][n-1]` and
//! `corner_lo = A[n-1][0]`. Solves use Thomas elimination without pivoting on
//! the banded part; the wrap entries are folded in with a rank-2 Woodbury
//! correction so the cost stays `O(n)` per right-hand side.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Pivots below this magnitude are treated as singular.
pub const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct TridiagonalOperator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    corner_lo: Option<f64>,
    corner_hi: Option<f64>,
    factorization: OnceLock<Factorization>,
}

#[derive(Debug, Clone)]
struct Factorization {
    /// Modified super-diagonal `c'_i` of the forward sweep.
    upper_mod: Vec<f64>,
    /// Reciprocal pivots.
    inv_pivot: Vec<f64>,
    periodic: Option<WoodburyCorrection>,
}

/// `A = T + U Vᵀ` with `U = [e_0, e_{n-1}]`, `V = [hi e_{n-1}, lo e_0]`.
#[derive(Debug, Clone)]
struct WoodburyCorrection {
    /// `T⁻¹ e_0` and `T⁻¹ e_{n-1}`.
    z0: Vec<f64>,
    z1: Vec<f64>,
    /// Inverse of the 2×2 capacitance matrix `I + Vᵀ T⁻¹ U`, row-major.
    cap_inv: [f64; 4],
    lo: f64,
    hi: f64,
}

impl PartialEq for TridiagonalOperator {
    fn eq(&self, other: &Self) -> bool {
        self.lower == other.lower
            && self.diag == other.diag
            && self.upper == other.upper
            && self.corner_lo == other.corner_lo
            && self.corner_hi == other.corner_hi
    }
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

impl TridiagonalOperator {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty tridiagonal operator".into()));
        }
        if lower.len() != n || upper.len() != n {
            return Err(Error::dims(
                "TridiagonalOperator::new",
                format!("bands of length {n}"),
                format!("lower {}, upper {}", lower.len(), upper.len()),
            ));
        }
        check_finite(&lower, "tridiagonal lower band")?;
        check_finite(&diag, "tridiagonal diagonal")?;
        check_finite(&upper, "tridiagonal upper band")?;
        let mut op = TridiagonalOperator {
            lower,
            diag,
            upper,
            corner_lo: None,
            corner_hi: None,
            factorization: OnceLock::new(),
        };
        op.lower[0] = 0.0;
        op.upper[n - 1] = 0.0;
        Ok(op)
    }

    /// Constant-coefficient operator (`lower`, `diag`, `upper` repeated).
    pub fn constant(n: usize, lower: f64, diag: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![diag; n], vec![upper; n])
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::constant(n, 0.0, 1.0, 0.0)
    }

    /// Adds periodic wrap entries `A[n-1][0] = corner_lo` and `A[0][n-1] = corner_hi`.
    pub fn with_periodic_corners(mut self, corner_lo: f64, corner_hi: f64) -> Result<Self> {
        if self.n() < 3 {
            return Err(Error::InvalidInput(
                "periodic corners need n >= 3".into(),
            ));
        }
        check_finite(&[corner_lo, corner_hi], "tridiagonal corner")?;
        self.corner_lo = Some(corner_lo);
        self.corner_hi = Some(corner_hi);
        self.factorization = OnceLock::new();
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// `(corner_lo, corner_hi)` = `(A[n-1][0], A[0][n-1])`.
    pub fn corners(&self) -> (Option<f64>, Option<f64>) {
        (self.corner_lo, self.corner_hi)
    }

    pub fn is_periodic(&self) -> bool {
        self.corner_lo.is_some() || self.corner_hi.is_some()
    }

    /// Mutable access to the bands. Drops any cached factorization.
    pub fn bands_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        self.factorization = OnceLock::new();
        (&mut self.lower, &mut self.diag, &mut self.upper)
    }

    /// Returns `alpha·I + beta·self`.
    pub fn shifted_scaled(&self, alpha: f64, beta: f64) -> TridiagonalOperator {
        let scale = |v: &[f64]| v.iter().map(|x| beta * x).collect::<Vec<_>>();
        TridiagonalOperator {
            lower: scale(&self.lower),
            diag: self.diag.iter().map(|x| alpha + beta * x).collect(),
            upper: scale(&self.upper),
            corner_lo: self.corner_lo.map(|c| beta * c),
            corner_hi: self.corner_hi.map(|c| beta * c),
            factorization: OnceLock::new(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i > 0 {
                m[(i, i - 1)] = self.lower[i];
            }
            if i + 1 < n {
                m[(i, i + 1)] = self.upper[i];
            }
        }
        if let Some(lo) = self.corner_lo {
            m[(n - 1, 0)] += lo;
        }
        if let Some(hi) = self.corner_hi {
            m[(0, n - 1)] += hi;
        }
        m
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.lower
            .iter()
            .chain(&self.diag)
            .chain(&self.upper)
            .chain(self.corner_lo.iter())
            .chain(self.corner_hi.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// `y = A x` for a single vector.
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        if n == 1 {
            y[0] = self.diag[0] * x[0];
            return;
        }
        y[0] = self.diag[0] * x[0] + self.upper[0] * x[1];
        for i in 1..n - 1 {
            y[i] = self.lower[i] * x[i - 1] + self.diag[i] * x[i] + self.upper[i] * x[i + 1];
        }
        y[n - 1] = self.lower[n - 1] * x[n - 2] + self.diag[n - 1] * x[n - 1];
        if let Some(hi) = self.corner_hi {
            y[0] += hi * x[n - 1];
        }
        if let Some(lo) = self.corner_lo {
            y[n - 1] += lo * x[0];
        }
    }

    /// Column-wise product `A X`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        if x.nrows() != n {
            return Err(Error::dims("TridiagonalOperator::apply", n, x.nrows()));
        }
        let mut y = DMatrix::zeros(n, x.ncols());
        if n == 0 {
            return Ok(y);
        }
        for (xc, yc) in x
            .as_slice()
            .chunks_exact(n)
            .zip(y.as_mut_slice().chunks_exact_mut(n))
        {
            self.apply_into(xc, yc);
        }
        Ok(y)
    }

    fn factorization(&self) -> Result<&Factorization> {
        if let Some(f) = self.factorization.get() {
            return Ok(f);
        }
        let f = self.factorize()?;
        Ok(self.factorization.get_or_init(|| f))
    }

    /// Builds the cached factorization now, so later shared use is read-only.
    pub fn prepare(&self) -> Result<()> {
        self.factorization().map(|_| ())
    }

    fn factorize(&self) -> Result<Factorization> {
        let n = self.n();
        let mut upper_mod = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let pivot = self.diag[i] - if i > 0 { self.lower[i] * prev_c } else { 0.0 };
            if !(pivot.abs() > PIVOT_FLOOR) {
                return Err(Error::SingularOperator { row: i, pivot });
            }
            inv_pivot[i] = 1.0 / pivot;
            prev_c = if i + 1 < n { self.upper[i] * inv_pivot[i] } else { 0.0 };
            upper_mod[i] = prev_c;
        }
        let mut f = Factorization {
            upper_mod,
            inv_pivot,
            periodic: None,
        };
        if self.is_periodic() {
            let lo = self.corner_lo.unwrap_or(0.0);
            let hi = self.corner_hi.unwrap_or(0.0);
            let mut z0 = vec![0.0; n];
            z0[0] = 1.0;
            f.thomas_in_place(&self.lower, &mut z0);
            let mut z1 = vec![0.0; n];
            z1[n - 1] = 1.0;
            f.thomas_in_place(&self.lower, &mut z1);
            // Capacitance I + Vᵀ Z with V = [hi e_{n-1}, lo e_0].
            let c00 = 1.0 + hi * z0[n - 1];
            let c01 = hi * z1[n - 1];
            let c10 = lo * z0[0];
            let c11 = 1.0 + lo * z1[0];
            let det = c00 * c11 - c01 * c10;
            let scale = c00.abs().max(c11.abs()).max(c01.abs()).max(c10.abs());
            if !(det.abs() > 1e-14 * scale * scale) {
                return Err(Error::SingularOperator {
                    row: n - 1,
                    pivot: det,
                });
            }
            f.periodic = Some(WoodburyCorrection {
                z0,
                z1,
                cap_inv: [c11 / det, -c01 / det, -c10 / det, c00 / det],
                lo,
                hi,
            });
        }
        Ok(f)
    }

    /// Solves `A x = b` in place for one right-hand side.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        if b.len() != self.n() {
            return Err(Error::dims("tridiag_solve", self.n(), b.len()));
        }
        let f = self.factorization()?;
        f.solve_in_place(&self.lower, b);
        Ok(())
    }

    /// Column-wise solve `A X = rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        if rhs.nrows() != n {
            return Err(Error::dims("tridiag_solve", n, rhs.nrows()));
        }
        let f = self.factorization()?;
        let mut x = rhs.clone();
        for col in x.as_mut_slice().chunks_exact_mut(n) {
            f.solve_in_place(&self.lower, col);
        }
        Ok(x)
    }
}

impl Factorization {
    fn thomas_in_place(&self, lower: &[f64], b: &mut [f64]) {
        let n = b.len();
        b[0] *= self.inv_pivot[0];
        for i in 1..n {
            b[i] = (b[i] - lower[i] * b[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            b[i] -= self.upper_mod[i] * b[i + 1];
        }
    }

    fn solve_in_place(&self, lower: &[f64], b: &mut [f64]) {
        self.thomas_in_place(lower, b);
        if let Some(w) = &self.periodic {
            let n = b.len();
            // Vᵀ y
            let v0 = w.hi * b[n - 1];
            let v1 = w.lo * b[0];
            let c0 = w.cap_inv[0] * v0 + w.cap_inv[1] * v1;
            let c1 = w.cap_inv[2] * v0 + w.cap_inv[3] * v1;
            for i in 0..n {
                b[i] -= w.z0[i] * c0 + w.z1[i] * c1;
            }
        }
    }
}

/// Solves `op · X = rhs` column by column.
pub fn tridiag_solve(op: &TridiagonalOperator, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    op.solve(rhs)
}
