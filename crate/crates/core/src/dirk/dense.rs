//! Full-rank DIRK reference: every stage is a dense Sylvester solve.

use nalgebra::DMatrix;

use super::{stage_operators, ButcherTable};
use crate::error::{Error, Result};
use crate::linalg::{DenseSylvester, TridiagonalOperator};

/// Dense DIRK stepper with the Schur factorizations of every distinct stage
/// operator cached, for operators that stay fixed across steps.
#[derive(Debug, Clone)]
pub struct DenseDirkStepper {
    table: ButcherTable,
    dt: f64,
    solvers: Vec<DenseSylvester>,
    solver_of_stage: Vec<usize>,
}

impl DenseDirkStepper {
    pub fn new(d: &[(TridiagonalOperator, TridiagonalOperator)], table: &ButcherTable, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
        }
        let ops = stage_operators(d, table, dt)?;
        let mut solvers = Vec::new();
        let mut solver_of_stage = Vec::with_capacity(ops.len());
        for k in 0..ops.len() {
            match (0..k).find(|&j| ops[j] == ops[k]) {
                Some(j) => solver_of_stage.push(solver_of_stage[j]),
                None => {
                    solvers.push(DenseSylvester::new(&ops[k].0.to_dense(), &ops[k].1.to_dense())?);
                    solver_of_stage.push(solvers.len() - 1);
                }
            }
        }
        Ok(DenseDirkStepper {
            table: table.clone(),
            dt,
            solvers,
            solver_of_stage,
        })
    }

    pub fn step(&self, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (m, k) = self.solvers[0].dims();
        if f.shape() != (m, k) {
            return Err(Error::dims("dense_dirk_step", format!("{m}x{k}"), format!("{:?}", f.shape())));
        }
        let s = self.table.stages();
        let mut derivs: Vec<DMatrix<f64>> = Vec::with_capacity(s);
        let mut stage = f.clone();
        for kk in 0..s {
            let mut b = f.clone();
            for (l, y) in derivs.iter().enumerate() {
                b += y * (self.dt * self.table.a(kk, l));
            }
            stage = self.solvers[self.solver_of_stage[kk]].solve_unchecked(&b)?;
            if kk + 1 < s {
                derivs.push((&stage - &b) / (self.table.a(kk, kk) * self.dt));
            }
        }
        Ok(stage)
    }
}

/// One dense DIRK step with freshly factorized stage operators.
pub fn dense_dirk_step(
    f: &DMatrix<f64>,
    d: &[(TridiagonalOperator, TridiagonalOperator)],
    table: &ButcherTable,
    dt: f64,
) -> Result<DMatrix<f64>> {
    DenseDirkStepper::new(d, table, dt)?.step(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirk::{dirk3, stage_operators};

    #[test]
    fn dense_step_matches_kronecker_stage_solves() {
        let n = 6;
        let d1 = TridiagonalOperator::constant(n, 1.0, -2.0, 1.0).unwrap();
        let d2 = TridiagonalOperator::constant(n, 0.5, -1.5, 0.7).unwrap();
        let table = dirk3();
        let dt = 0.05;
        let f = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let got = dense_dirk_step(&f, &[(d1.clone(), d2.clone())], &table, dt).unwrap();

        // Oracle: stage derivatives from the vectorized linear system.
        let dd1 = d1.to_dense();
        let dd2 = d2.to_dense();
        let eye = DMatrix::<f64>::identity(n, n);
        let lmat = eye.kronecker(&dd1) + dd2.kronecker(&eye);
        let big_eye = DMatrix::<f64>::identity(n * n, n * n);
        let fv = nalgebra::DVector::from_column_slice(f.as_slice());
        let mut ys: Vec<nalgebra::DVector<f64>> = Vec::new();
        for k in 0..3 {
            let mut base = fv.clone();
            for (l, y) in ys.iter().enumerate() {
                base += y * (dt * table.a(k, l));
            }
            let sys = &big_eye - &lmat * (dt * table.a(k, k));
            let stage = sys.lu().solve(&base).unwrap();
            ys.push(&lmat * stage);
        }
        let mut out = fv;
        for (k, y) in ys.iter().enumerate() {
            out += y * (dt * table.b()[k]);
        }
        let oracle = DMatrix::from_column_slice(n, n, out.as_slice());
        assert!((got - oracle).norm() < 1e-12);
        assert_eq!(stage_operators(&[(d1.clone(), d2)], &table, dt).unwrap().len(), 3);
    }

    #[test]
    fn identical_stage_operators_share_a_factorization() {
        let d = TridiagonalOperator::constant(5, 1.0, -2.0, 1.0).unwrap();
        let stepper = DenseDirkStepper::new(&[(d.clone(), d)], &dirk3(), 0.1).unwrap();
        assert_eq!(stepper.solvers.len(), 1);
        assert!(stepper.step(&DMatrix::zeros(4, 5)).is_err());
    }
}
