//! Primal active-set method for small strictly convex quadratic programs
//!
//! ```text
//!     minimize    z'Qz + q'z
//!     subject to  E z  = e
//!                 A z <= b
//! ```
//!
//! started from a feasible point. Constraints enter the working set in index
//! order on ties and leave by most negative multiplier, lowest index first.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::pinv;

pub const KKT_TOL: f64 = 1e-8;
const STEP_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Objective without the constant term.
    pub value: f64,
    /// Working inequality indices at termination.
    pub active: Vec<usize>,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: Vec<(usize, f64)>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

pub struct QpProblem<'a> {
    pub q: &'a DMatrix<f64>,
    pub lin: &'a DVector<f64>,
    pub eq_a: &'a DMatrix<f64>,
    pub eq_b: &'a DVector<f64>,
    pub ineq_a: &'a DMatrix<f64>,
    pub ineq_b: &'a DVector<f64>,
}

impl QpProblem<'_> {
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        self.q * z * 2.0 + self.lin
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        z.dot(&(self.q * z)) + self.lin.dot(z)
    }

    fn constraint_rows(&self, working: &[usize]) -> DMatrix<f64> {
        let m = self.q.nrows();
        let ne = self.eq_a.nrows();
        DMatrix::from_fn(ne + working.len(), m, |i, j| {
            if i < ne {
                self.eq_a[(i, j)]
            } else {
                self.ineq_a[(working[i - ne], j)]
            }
        })
    }

    /// Solves the equality-constrained step problem and returns `(p, multipliers)`.
    fn step(&self, z: &DVector<f64>, working: &[usize]) -> (DVector<f64>, DVector<f64>) {
        let m = self.q.nrows();
        let e = self.constraint_rows(working);
        let k = e.nrows();
        let mut kkt = DMatrix::zeros(m + k, m + k);
        kkt.view_mut((0, 0), (m, m)).copy_from(&(self.q * 2.0));
        kkt.view_mut((0, m), (m, k)).copy_from(&e.transpose());
        kkt.view_mut((m, 0), (k, m)).copy_from(&e);
        let mut rhs = DVector::zeros(m + k);
        rhs.rows_mut(0, m).copy_from(&(-self.gradient(z)));
        let sol = pinv(&kkt) * rhs;
        (sol.rows(0, m).into_owned(), sol.rows(m, k).into_owned())
    }

    pub fn solve(&self, start: DVector<f64>) -> Result<QpSolution> {
        let m = self.q.nrows();
        let ne = self.eq_a.nrows();
        let nin = self.ineq_a.nrows();
        let max_iter = 50 * (m + nin + ne) + 50;
        let scale = 1.0 + self.q.amax() + self.lin.amax();
        let mut z = start;
        let mut working: Vec<usize> = Vec::new();
        for iter in 0..max_iter {
            let (p, mult) = self.step(&z, &working);
            if p.amax() <= STEP_TOL * (1.0 + z.amax()) {
                let ineq: Vec<(usize, f64)> = working.iter().enumerate().map(|(i, &c)| (c, mult[ne + i])).collect();
                let worst = ineq
                    .iter()
                    .enumerate()
                    .filter(|(_, (_, l))| *l < -KKT_TOL * scale)
                    .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap().then(a.1 .0.cmp(&b.1 .0)));
                match worst {
                    Some((pos, _)) => {
                        working.remove(pos);
                        continue;
                    }
                    None => {
                        let kkt_residual = self.kkt_residual(&z, &working, &mult);
                        if kkt_residual > KKT_TOL * scale {
                            return Err(Error::Qp(format!("KKT residual {kkt_residual:.3e} above tolerance")));
                        }
                        return Ok(QpSolution {
                            value: self.objective(&z),
                            eq_multipliers: mult.rows(0, ne).into_owned(),
                            ineq_multipliers: ineq,
                            active: working,
                            z,
                            kkt_residual,
                            iterations: iter,
                        });
                    }
                }
            }
            // ratio test over constraints outside the working set
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..nin {
                if working.contains(&i) {
                    continue;
                }
                let row = self.ineq_a.row(i);
                let ap = row.dot(&p.transpose());
                if ap > STEP_TOL {
                    let slack = (self.ineq_b[i] - row.dot(&z.transpose())).max(0.0);
                    let t = slack / ap;
                    if t < alpha {
                        alpha = t;
                        blocking = Some(i);
                    }
                }
            }
            z += &p * alpha;
            if let Some(i) = blocking {
                working.push(i);
            }
        }
        Err(Error::Qp(format!("active-set iteration limit {max_iter} reached")))
    }

    fn kkt_residual(&self, z: &DVector<f64>, working: &[usize], mult: &DVector<f64>) -> f64 {
        let e = self.constraint_rows(working);
        let station = (self.gradient(z) + e.transpose() * mult).amax();
        let primal_eq = if self.eq_a.nrows() > 0 {
            (self.eq_a * z - self.eq_b).amax()
        } else {
            0.0
        };
        let primal_in = if self.ineq_a.nrows() > 0 {
            (self.ineq_a * z - self.ineq_b).max().max(0.0)
        } else {
            0.0
        };
        station.max(primal_eq).max(primal_in)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_constrained_projection() {
        // minimize |z - (2, -1)|^2 over [0,1]^2 -> (1, 0)
        let q = DMatrix::identity(2, 2);
        let lin = DVector::from_column_slice(&[-4.0, 2.0]);
        let ineq_a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let ineq_b = DVector::from_column_slice(&[1.0, 1.0, 0.0, 0.0]);
        let prob = QpProblem {
            q: &q,
            lin: &lin,
            eq_a: &DMatrix::zeros(0, 2),
            eq_b: &DVector::zeros(0),
            ineq_a: &ineq_a,
            ineq_b: &ineq_b,
        };
        let sol = prob.solve(DVector::from_column_slice(&[0.5, 0.5])).unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-12 && sol.z[1].abs() < 1e-12);
        assert!(sol.ineq_multipliers.iter().all(|(_, l)| *l >= -1e-12));
    }
}
