use crate::error::{Error, Result};

/// Tolerance for `cᵢ = Σⱼ aᵢⱼ` and stiff accuracy.
const STRUCTURE_TOL: f64 = 1e-14;
/// Order conditions hold only to the digits the coefficients are given with.
const ORDER_TOL: f64 = 1e-9;

/// Diagonally implicit, stiffly accurate Runge–Kutta table.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTable {
    name: &'static str,
    order: u32,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl ButcherTable {
    /// `a` is given row-wise; row `k` may omit its zero entries above the diagonal.
    pub fn new(name: &'static str, order: u32, a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let s = b.len();
        if s == 0 || a.len() != s || c.len() != s {
            return Err(Error::InvalidTable(format!("{name}: inconsistent stage counts")));
        }
        let mut rows = Vec::with_capacity(s);
        for (k, row) in a.into_iter().enumerate() {
            if row.len() < k + 1 || row.iter().skip(k + 1).any(|&x| x != 0.0) {
                return Err(Error::InvalidTable(format!("{name}: row {k} is not lower triangular")));
            }
            if !(row[k] > 0.0) {
                return Err(Error::InvalidTable(format!("{name}: a[{k}][{k}] must be positive")));
            }
            rows.push(row[..=k].to_vec());
        }
        for k in 0..s {
            let sum: f64 = rows[k].iter().sum();
            if (sum - c[k]).abs() > STRUCTURE_TOL {
                return Err(Error::InvalidTable(format!("{name}: c[{k}] != row sum")));
            }
        }
        for (i, &bi) in b.iter().enumerate() {
            if (bi - rows[s - 1][i]).abs() > STRUCTURE_TOL {
                return Err(Error::InvalidTable(format!("{name}: not stiffly accurate at b[{i}]")));
            }
        }
        let table = ButcherTable { name, order, a: rows, b, c };
        let defects = table.order_defects();
        if let Some((cond, d)) = defects.iter().find(|(_, d)| d.abs() > ORDER_TOL) {
            return Err(Error::InvalidTable(format!("{name}: order condition {cond} off by {d:e}")));
        }
        Ok(table)
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Row `k` up to and including the diagonal.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.a[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn a(&self, k: usize, l: usize) -> f64 {
        self.a[k].get(l).copied().unwrap_or(0.0)
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Defects of the classical order conditions up to the table's order.
    pub fn order_defects(&self) -> Vec<(&'static str, f64)> {
        let s = self.stages();
        let b = &self.b;
        let c = &self.c;
        let mut out = vec![("sum b = 1", b.iter().sum::<f64>() - 1.0)];
        if self.order >= 2 {
            out.push(("sum b c = 1/2", (0..s).map(|i| b[i] * c[i]).sum::<f64>() - 0.5));
        }
        if self.order >= 3 {
            out.push(("sum b c^2 = 1/3", (0..s).map(|i| b[i] * c[i] * c[i]).sum::<f64>() - 1.0 / 3.0));
            let bac: f64 = (0..s)
                .map(|i| b[i] * (0..=i).map(|j| self.a(i, j) * c[j]).sum::<f64>())
                .sum();
            out.push(("sum b a c = 1/6", bac - 1.0 / 6.0));
        }
        out
    }
}

/// Backward Euler.
pub fn backward_euler() -> ButcherTable {
    ButcherTable::new("BE", 1, vec![vec![1.0]], vec![1.0], vec![1.0]).expect("valid table")
}

/// Two-stage, second-order L-stable DIRK with `γ = 1 − √2/2`.
pub fn dirk2() -> ButcherTable {
    let g = 1.0 - std::f64::consts::SQRT_2 / 2.0;
    ButcherTable::new(
        "DIRK2",
        2,
        vec![vec![g], vec![1.0 - g, g]],
        vec![1.0 - g, g],
        vec![g, 1.0],
    )
    .expect("valid table")
}

/// Three-stage, third-order L-stable DIRK with `x = 0.4358665215`.
pub fn dirk3() -> ButcherTable {
    let x: f64 = 0.4358665215;
    let b1 = -1.5 * x * x + 4.0 * x - 0.25;
    let b2 = 1.5 * x * x - 5.0 * x + 1.25;
    ButcherTable::new(
        "DIRK3",
        3,
        vec![vec![x], vec![(1.0 - x) / 2.0, x], vec![b1, b2, x]],
        vec![b1, b2, x],
        vec![x, (1.0 + x) / 2.0, 1.0],
    )
    .expect("valid table")
}

/// The built-in tables, lowest order first.
pub fn builtin_tables() -> [ButcherTable; 3] {
    [backward_euler(), dirk2(), dirk3()]
}

/// Looks a built-in table up by name (`BE`, `DIRK2`, `DIRK3`, case-insensitive).
pub fn table_by_name(name: &str) -> Result<ButcherTable> {
    builtin_tables()
        .into_iter()
        .find(|t| t.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::InvalidInput(format!("unknown integrator {name:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_euler_table() {
        let t = backward_euler();
        assert_eq!(t.rows(), &[vec![1.0]]);
        assert_eq!(t.b(), &[1.0]);
        assert_eq!(t.c(), &[1.0]);
    }

    #[test]
    fn dirk2_coefficients() {
        let t = dirk2();
        let g = t.a(0, 0);
        assert!((g - 0.29289321881345254).abs() < 1e-15);
        assert_eq!(t.a(1, 0), 1.0 - g);
        assert_eq!(t.a(1, 1), g);
        assert_eq!(t.a(0, 1), 0.0);
    }

    #[test]
    fn dirk3_coefficients_and_conditions() {
        let t = dirk3();
        let x = 0.4358665215;
        assert_eq!(t.a(2, 2), x);
        assert!((t.a(2, 0) - (-1.5 * x * x + 4.0 * x - 0.25)).abs() < 1e-15);
        assert!((t.b().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for (_, d) in t.order_defects() {
            assert!(d.abs() < 1e-9);
        }
    }

    #[test]
    fn all_builtins_satisfy_their_order_conditions() {
        for t in builtin_tables() {
            assert_eq!(t.order_defects().len(), if t.order() >= 3 { 4 } else { t.order() as usize });
            assert!(t.order_defects().iter().all(|(_, d)| d.abs() < 1e-9), "{}", t.name());
        }
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(ButcherTable::new("x", 1, vec![vec![0.0]], vec![1.0], vec![0.0]).is_err());
        assert!(ButcherTable::new("x", 1, vec![vec![1.0, 0.5]], vec![1.0], vec![1.0]).is_err());
        assert!(ButcherTable::new("x", 1, vec![vec![1.0]], vec![1.0], vec![0.9]).is_err());
        // Second-order claim for backward Euler fails its order condition.
        assert!(ButcherTable::new("x", 2, vec![vec![1.0]], vec![1.0], vec![1.0]).is_err());
        // Not stiffly accurate.
        assert!(ButcherTable::new("x", 1, vec![vec![0.5], vec![0.5, 0.5]], vec![0.6, 0.4], vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!(table_by_name("dirk2").unwrap().stages(), 2);
        assert!(table_by_name("rk4").is_err());
    }
}
