//! The effective holding cost `ǧ(w) = min { g(z) : Mz = w, z ∈ Z }` with
//! `g(z) = h(z) + α π'z`, and the selection `ψ(w)` attaining it.
//!
//! The generic minimizer is an active-set QP on the fiber and needs `g`
//! strictly convex. For the two-server network a closed-form selection is
//! available; [`TabulatedSelection`] interpolates a QP table for fast
//! evaluation inside simulation loops.

mod counterexample;
pub mod qp;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use counterexample::{discontinuity_probe, quasiconvex_level_eval, ProbeRow};

use crate::error::{Error, Result};
use crate::lp::{self, Bound};
use crate::model::{NetworkData, Polytope, QuadraticCost, TwoServerParams};
use crate::reduction::WorkloadReduction;
use qp::QpProblem;

/// Membership tolerance for arguments of `g`.
pub const Z_TOL: f64 = 1e-9;
/// `Mψ(w) = w` and `g(ψ(w)) = ǧ(w)` hold to this tolerance.
pub const SELECTION_TOL: f64 = 1e-7;

/// `g(z) = h(z) + α π'z`, rejecting `z` outside `Z`.
pub fn eval_g(z: &[f64], h: &QuadraticCost, alpha: f64, pi: &DVector<f64>, space: &Polytope) -> Result<f64> {
    if z.len() != h.dim() || pi.len() != h.dim() {
        return Err(Error::Dimension(format!(
            "z has {} entries, h acts on {}",
            z.len(),
            h.dim()
        )));
    }
    let viol = space.violation(z);
    if viol > Z_TOL {
        return Err(Error::InvalidInput(format!("z lies outside Z (violation {viol:.3e})")));
    }
    Ok(g_unchecked(z, h, alpha, pi))
}

#[inline]
fn g_unchecked(z: &[f64], h: &QuadraticCost, alpha: f64, pi: &DVector<f64>) -> f64 {
    h.eval(z) + alpha * pi.iter().zip(z).map(|(p, x)| p * x).sum::<f64>()
}

/// `g` with `Q` and `c + απ` stored flat for evaluation in tight loops.
#[derive(Debug, Clone)]
struct FlatG {
    m: usize,
    q: Vec<f64>,
    lin: Vec<f64>,
    c0: f64,
}

impl FlatG {
    fn new(h: &QuadraticCost, alpha: f64, pi: &DVector<f64>) -> Self {
        let m = h.dim();
        FlatG {
            m,
            q: (0..m * m).map(|i| h.q[(i / m, i % m)]).collect(),
            lin: (0..m).map(|i| h.c[i] + alpha * pi[i]).collect(),
            c0: h.c0,
        }
    }

    #[inline]
    fn eval(&self, z: &[f64]) -> f64 {
        let m = self.m;
        let mut s = self.c0;
        for i in 0..m {
            let row = &self.q[i * m..(i + 1) * m];
            let mut qi = self.lin[i];
            for j in 0..m {
                qi += row[j] * z[j];
            }
            s += z[i] * qi;
        }
        s
    }
}

/// Closed-form selection for the two-server network with `M = (2, 1)` on
/// `Z = [0, b]^2`, valid for `0 <= w <= 3b`.
pub fn two_server_selection(w: f64, a1: f64, a2: f64, b: f64) -> Result<[f64; 2]> {
    if !(0.0..=3.0 * b).contains(&w) {
        return Err(Error::InfeasibleFiber(w));
    }
    let interior = 2.0 * a2 * w / (4.0 * a2 + a1);
    let psi1 = if w <= b {
        interior
    } else if w <= 2.0 * b {
        interior.max((w - b) / 2.0)
    } else {
        b.min(interior.max((w - b) / 2.0))
    };
    Ok([psi1, w - 2.0 * psi1])
}

/// A map `w -> (ψ(w), ǧ(w))` usable from many threads.
pub trait Selection: Sync {
    fn state_dim(&self) -> usize;
    fn workload_dim(&self) -> usize;
    /// Writes `ψ(w)` into `z` and returns `ǧ(w)`.
    fn select_into(&self, w: &[f64], z: &mut [f64]) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct FiberMinimum {
    pub psi: DVector<f64>,
    pub gcheck: f64,
    pub kkt_residual: f64,
}

/// `(M, Z, g)` with an optional closed form for the two-server network.
#[derive(Debug, Clone)]
pub struct EffectiveCost {
    m: DMatrix<f64>,
    space: Polytope,
    h: QuadraticCost,
    alpha: f64,
    pi: DVector<f64>,
    closed_form: Option<TwoServerParams>,
    flat: FlatG,
}

impl EffectiveCost {
    pub fn new(data: &NetworkData, red: &WorkloadReduction) -> Self {
        EffectiveCost {
            flat: FlatG::new(&data.h, data.alpha, &red.pi),
            m: red.m.clone(),
            space: data.state_space.clone(),
            h: data.h.clone(),
            alpha: data.alpha,
            pi: red.pi.clone(),
            closed_form: None,
        }
    }

    /// Uses [`two_server_selection`] instead of the QP. The caller vouches that
    /// the data is the two-server network with these parameters and `M = (2, 1)`.
    pub fn with_two_server_closed_form(mut self, params: TwoServerParams) -> Self {
        self.closed_form = Some(params);
        self
    }

    pub fn workload_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn state_space(&self) -> &Polytope {
        &self.space
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn has_closed_form(&self) -> bool {
        self.closed_form.is_some()
    }

    pub fn eval_g(&self, z: &[f64]) -> Result<f64> {
        eval_g(z, &self.h, self.alpha, &self.pi, &self.space)
    }

    /// The unique minimizer of `g` on the fiber over `w`, by active-set QP.
    pub fn minimize_on_fiber(&self, w: &[f64]) -> Result<FiberMinimum> {
        let (d, m) = self.m.shape();
        if w.len() != d {
            return Err(Error::Dimension(format!("w has {} entries, expected {d}", w.len())));
        }
        if !self.h.is_strictly_convex() {
            return Err(Error::UnsupportedCost(
                "the fiber minimizer needs a strictly convex holding cost (Q positive definite)".into(),
            ));
        }
        let wv = DVector::from_column_slice(w);
        let start = lp::lp_feasible(&self.m, &wv, self.space.a(), self.space.b(), &vec![Bound::FREE; m])?
            .ok_or(Error::InfeasibleFiber(w.first().copied().unwrap_or(0.0)))?;
        let lin = &self.h.c + &self.pi * self.alpha;
        let prob = QpProblem {
            q: &self.h.q,
            lin: &lin,
            eq_a: &self.m,
            eq_b: &wv,
            ineq_a: self.space.a(),
            ineq_b: self.space.b(),
        };
        let sol = prob.solve(start)?;
        Ok(FiberMinimum {
            gcheck: sol.value + self.h.c0,
            psi: sol.z,
            kkt_residual: sol.kkt_residual,
        })
    }

    /// `(ψ(w), ǧ(w))` from the closed form when configured, else from the QP.
    pub fn select(&self, w: &[f64]) -> Result<(DVector<f64>, f64)> {
        let mut z = vec![0.0; self.m.ncols()];
        let g = self.select_into(w, &mut z)?;
        Ok((DVector::from_vec(z), g))
    }

    /// Checks `Mψ(w) = w`, `ψ(w) ∈ Z` and `g(ψ(w)) = ǧ(w)`.
    pub fn verify_selection(&self, w: &[f64], psi: &[f64], gcheck: f64) -> Result<()> {
        let z = DVector::from_column_slice(psi);
        let fiber = (&self.m * &z - DVector::from_column_slice(w)).amax();
        let g = self.eval_g(psi)?;
        let scale = 1.0 + g.abs();
        if fiber > SELECTION_TOL || (g - gcheck).abs() > SELECTION_TOL * scale {
            return Err(Error::Identity {
                what: "selection".into(),
                residual: fiber.max((g - gcheck).abs()),
            });
        }
        Ok(())
    }
}

impl Selection for EffectiveCost {
    fn state_dim(&self) -> usize {
        self.m.ncols()
    }

    fn workload_dim(&self) -> usize {
        self.m.nrows()
    }

    fn select_into(&self, w: &[f64], z: &mut [f64]) -> Result<f64> {
        match &self.closed_form {
            Some(p) => {
                let psi = two_server_selection(w[0], p.a1, p.a2, p.b)?;
                z.copy_from_slice(&psi);
                Ok(self.flat.eval(z))
            }
            None => {
                let fm = self.minimize_on_fiber(w)?;
                z.copy_from_slice(fm.psi.as_slice());
                Ok(fm.gcheck)
            }
        }
    }
}

/// One row of an effective-cost table; `result` carries per-point failures.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub w: Vec<f64>,
    pub result: std::result::Result<(DVector<f64>, f64), String>,
}

impl CurveRow {
    pub fn gcheck(&self) -> Option<f64> {
        self.result.as_ref().ok().map(|r| r.1)
    }

    pub fn psi(&self) -> Option<&DVector<f64>> {
        self.result.as_ref().ok().map(|r| &r.0)
    }
}

/// Tabulates `(w, ψ(w), ǧ(w))` with the QP minimizer, in grid order.
pub fn effective_cost_curve(ec: &EffectiveCost, grid: &[Vec<f64>]) -> Vec<CurveRow> {
    grid.par_iter()
        .map(|w| CurveRow {
            w: w.clone(),
            result: ec
                .minimize_on_fiber(w)
                .map(|f| (f.psi, f.gcheck))
                .map_err(|e| e.to_string()),
        })
        .collect()
}

/// `count` equally spaced points of `[lo, hi]`, as one-dimensional workloads.
pub fn scalar_grid(lo: f64, hi: f64, count: usize) -> Vec<Vec<f64>> {
    match count {
        0 => Vec::new(),
        1 => vec![vec![lo]],
        _ => (0..count)
            .map(|i| vec![lo + (hi - lo) * i as f64 / (count - 1) as f64])
            .collect(),
    }
}

/// Piecewise-linear interpolation of a QP table of `ψ` on an interval; `ǧ`
/// is re-evaluated as `g(ψ_interp(w))` so the selection identity is exact.
#[derive(Debug, Clone)]
pub struct TabulatedSelection {
    lo: f64,
    step: f64,
    /// Row-major `knots × m`.
    psi: Vec<f64>,
    m: usize,
    g: FlatG,
}

impl TabulatedSelection {
    /// Tabulates on `knots` equally spaced points of `[lo, hi]`; needs `d = 1`.
    pub fn build(ec: &EffectiveCost, lo: f64, hi: f64, knots: usize) -> Result<Self> {
        if ec.m.nrows() != 1 {
            return Err(Error::Dimension("tabulated selection needs a scalar workload".into()));
        }
        if knots < 2 || hi <= lo {
            return Err(Error::InvalidInput(format!(
                "table over [{lo}, {hi}] with {knots} knots"
            )));
        }
        let m = ec.m.ncols();
        let rows = effective_cost_curve(ec, &scalar_grid(lo, hi, knots));
        let mut psi = Vec::with_capacity(knots * m);
        for row in rows {
            match row.result {
                Ok((z, _)) => psi.extend_from_slice(z.as_slice()),
                Err(e) => return Err(Error::Qp(format!("tabulating at w = {}: {e}", row.w[0]))),
            }
        }
        Ok(TabulatedSelection {
            lo,
            step: (hi - lo) / (knots - 1) as f64,
            psi,
            m,
            g: ec.flat.clone(),
        })
    }
}

impl Selection for TabulatedSelection {
    fn state_dim(&self) -> usize {
        self.m
    }

    fn workload_dim(&self) -> usize {
        1
    }

    fn select_into(&self, w: &[f64], z: &mut [f64]) -> Result<f64> {
        let knots = self.psi.len() / self.m;
        let pos = (w[0] - self.lo) / self.step;
        let tol = 1e-9 * (1.0 + knots as f64);
        if pos < -tol || pos > (knots - 1) as f64 + tol {
            return Err(Error::InfeasibleFiber(w[0]));
        }
        let pos = pos.clamp(0.0, (knots - 1) as f64);
        let i = (pos.floor() as usize).min(knots - 2);
        let t = pos - i as f64;
        let (a, b) = (
            &self.psi[i * self.m..(i + 1) * self.m],
            &self.psi[(i + 1) * self.m..(i + 2) * self.m],
        );
        for j in 0..self.m {
            z[j] = (1.0 - t) * a[j] + t * b[j];
        }
        Ok(self.g.eval(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::reduce_network;

    fn two_server_ec() -> EffectiveCost {
        let data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        let m = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let pi = DVector::from_column_slice(&[1.0, 0.5]);
        let (red, _) = reduce_network(&data, Some(&m), Some(&pi)).unwrap();
        EffectiveCost::new(&data, &red)
    }

    #[test]
    fn g_on_two_server() {
        let ec = two_server_ec();
        assert!((ec.eval_g(&[1.0, 1.0]).unwrap() - 2.15).abs() < 1e-12);
        assert_eq!(ec.eval_g(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((ec.pi.dot(&DVector::from_column_slice(&[1.0, 1.0])) - 1.5).abs() < 1e-12);
        assert!(ec.eval_g(&[11.0, 0.0]).is_err());
    }

    #[test]
    fn fiber_minimum_examples() {
        let ec = two_server_ec();
        let f = ec.minimize_on_fiber(&[1.0]).unwrap();
        assert!((f.psi[0] - 0.4).abs() < 1e-10 && (f.psi[1] - 0.2).abs() < 1e-10);
        assert!((f.gcheck - 0.25).abs() < 1e-10);
        let f = ec.minimize_on_fiber(&[0.0]).unwrap();
        assert!(f.psi.amax() < 1e-10 && f.gcheck.abs() < 1e-10);
        let f = ec.minimize_on_fiber(&[30.0]).unwrap();
        assert!((f.psi[0] - 10.0).abs() < 1e-9 && (f.psi[1] - 10.0).abs() < 1e-9);
        assert!((f.gcheck - 201.5).abs() < 1e-8);
        assert!(matches!(ec.minimize_on_fiber(&[31.0]), Err(Error::InfeasibleFiber(_))));
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(two_server_selection(5.0, 1.0, 1.0, 10.0).unwrap(), [2.0, 1.0]);
        let [a, b] = two_server_selection(18.0, 1.0, 1.0, 10.0).unwrap();
        assert!((a - 7.2).abs() < 1e-12 && (b - 3.6).abs() < 1e-12);
        assert_eq!(two_server_selection(30.0, 1.0, 1.0, 10.0).unwrap(), [10.0, 10.0]);
        assert!(two_server_selection(-0.1, 1.0, 1.0, 10.0).is_err());
        let f = two_server_ec().minimize_on_fiber(&[18.0]).unwrap();
        assert!((f.psi[0] - 7.2).abs() < 1e-9);
    }

    #[test]
    fn curve_rows_and_failures() {
        let ec = two_server_ec();
        let rows = effective_cost_curve(&ec, &[vec![0.0], vec![5.0], vec![10.0], vec![31.0]]);
        let expect = [0.0, 5.25, 20.5];
        for (row, e) in rows.iter().zip(expect) {
            assert!((row.gcheck().unwrap() - e).abs() < 1e-9);
        }
        assert!(rows[3].result.is_err());
        assert_eq!(effective_cost_curve(&ec, &[vec![0.0]]).len(), 1);
    }

    #[test]
    fn semidefinite_cost_is_unsupported() {
        let mut data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        data.h = QuadraticCost::diagonal(&[1.0, 0.0]).unwrap();
        let (red, _) = reduce_network(&data, None, None).unwrap();
        let ec = EffectiveCost::new(&data, &red);
        assert!(matches!(ec.minimize_on_fiber(&[1.0]), Err(Error::UnsupportedCost(_))));
    }

    #[test]
    fn table_matches_qp_at_knots_and_keeps_identity() {
        let ec = two_server_ec();
        let table = TabulatedSelection::build(&ec, 0.0, 30.0, 301).unwrap();
        let mut z = [0.0; 2];
        for w in [0.0, 7.0, 12.3, 29.99, 30.0] {
            let g = table.select_into(&[w], &mut z).unwrap();
            ec.verify_selection(&[w], &z, g).unwrap();
        }
        assert!(table.select_into(&[30.5], &mut z).is_err());
    }
}
