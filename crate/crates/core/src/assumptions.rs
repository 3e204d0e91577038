//! LP certificates for full displacement and no arbitrage, and the constants
//! `γ`, `η` that bound the control cost in terms of the state displacement.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{self, Bound, LpOutcome, LpProblem, FEAS_TOL};

/// Recorded in every report: the Euclidean norms in the definitions of
/// `γ` and `η` are replaced by infinity norms so that each subproblem is an LP.
pub const NORM_NOTE: &str = "gamma and eta use the infinity norm on Ry and y (LP surrogate for the Euclidean norm)";

/// Optimal values at or below this are treated as zero in the arbitrage test.
const ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct FullDisplacement {
    pub holds: bool,
    /// `witnesses[i]` has `R y = e_i` and `witnesses[m + i]` has `R y = -e_i`,
    /// both with `K y >= 0`. `None` where the LP is infeasible.
    pub witnesses: Vec<Option<DVector<f64>>>,
}

impl FullDisplacement {
    /// All `2m` witnesses as columns, when the assumption holds.
    pub fn witness_matrix(&self) -> Option<DMatrix<f64>> {
        if !self.holds {
            return None;
        }
        let cols: Vec<DVector<f64>> = self.witnesses.iter().map(|w| w.clone().unwrap()).collect();
        Some(DMatrix::from_columns(&cols))
    }
}

#[derive(Debug, Clone)]
pub struct NoArbitrage {
    pub holds: bool,
    /// A nonzero `y` with `Ky >= 0`, `Ry = 0`, `v'y <= 0` and `|y|_inf = 1`.
    pub ray: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub full_displacement: FullDisplacement,
    pub no_arbitrage: NoArbitrage,
    /// `None` when no arbitrage fails (the defining LPs are then unbounded).
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub norm_note: &'static str,
}

impl AssumptionReport {
    pub fn all_hold(&self) -> bool {
        self.full_displacement.holds && self.no_arbitrage.holds
    }
}

fn nonneg_constraint(k: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    (-k, DVector::zeros(k.nrows()))
}

/// Decides whether `{Ry : Ky >= 0}` is all of `R^m` by testing `±e_i`.
pub fn check_full_displacement(r: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<FullDisplacement> {
    let (m, n) = r.shape();
    let (a_ub, b_ub) = nonneg_constraint(k);
    let bounds = vec![Bound::FREE; n];
    let mut witnesses = vec![None; 2 * m];
    for sign in [1.0, -1.0] {
        for i in 0..m {
            let mut e = DVector::zeros(m);
            e[i] = sign;
            let w = lp::lp_feasible(r, &e, &a_ub, &b_ub, &bounds)?;
            let slot = if sign > 0.0 { i } else { m + i };
            witnesses[slot] = w;
        }
    }
    Ok(FullDisplacement {
        holds: witnesses.iter().all(|w| w.is_some()),
        witnesses,
    })
}

/// Decides whether `{y : Ky >= 0, Ry = 0, v'y <= 0} = {0}` with `2n` LPs over
/// the unit infinity ball.
pub fn check_no_arbitrage(r: &DMatrix<f64>, k: &DMatrix<f64>, v: &DVector<f64>) -> Result<NoArbitrage> {
    let n = r.ncols();
    let (a_k, b_k) = nonneg_constraint(k);
    let a_v = DMatrix::from_row_slice(1, n, v.as_slice());
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut c = DVector::zeros(n);
            c[j] = -sign;
            let prob = LpProblem::new(c)
                .with_eq(r, &DVector::zeros(r.nrows()))
                .with_ub(&a_k, &b_k)
                .with_ub(&a_v, &DVector::zeros(1))
                .with_bounds(vec![Bound::new(-1.0, 1.0); n]);
            match lp::solve_lp(&prob)? {
                LpOutcome::Optimal { x, value } => {
                    if -value > ZERO_TOL {
                        let norm = x.amax();
                        return Ok(NoArbitrage {
                            holds: false,
                            ray: Some(x / norm),
                        });
                    }
                }
                other => {
                    return Err(Error::Lp(lp::LpError::NumericalFailure(format!(
                        "bounded arbitrage LP returned {other:?}"
                    ))))
                }
            }
        }
    }
    Ok(NoArbitrage { holds: true, ray: None })
}

/// `(γ, η)` with `|Ry|_inf <= radius`; both scale linearly with `radius`.
pub fn compute_gamma_eta_with_radius(
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
    v: &DVector<f64>,
    radius: f64,
) -> Result<(f64, f64)> {
    let (m, n) = r.shape();
    let (a_k, b_k) = nonneg_constraint(k);
    let ball = DVector::from_element(m, radius);
    let base = LpProblem::feasibility(n)
        .with_ub(&a_k, &b_k)
        .with_ub(r, &ball)
        .with_ub(&(-r), &ball);

    let unbounded = |what: &str| Error::Assumption(format!("{what} is unbounded: no-arbitrage fails"));

    let mut prob = base.clone();
    prob.c = v.clone();
    let gamma = match lp::solve_lp(&prob)? {
        LpOutcome::Optimal { value, .. } => (-value).max(0.0),
        LpOutcome::Unbounded { .. } => return Err(unbounded("gamma")),
        LpOutcome::Infeasible => return Err(Error::Lp(lp::LpError::NumericalFailure("y = 0 is feasible".into()))),
    };

    let a_v = DMatrix::from_row_slice(1, n, v.as_slice());
    let with_v = base.with_ub(&a_v, &DVector::zeros(1));
    let mut eta = 0.0f64;
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut prob = with_v.clone();
            prob.c = DVector::zeros(n);
            prob.c[j] = -sign;
            match lp::solve_lp(&prob)? {
                LpOutcome::Optimal { value, .. } => eta = eta.max(-value),
                LpOutcome::Unbounded { .. } => return Err(unbounded("eta")),
                LpOutcome::Infeasible => {
                    return Err(Error::Lp(lp::LpError::NumericalFailure("y = 0 is feasible".into())))
                }
            }
        }
    }
    Ok((gamma, eta.max(0.0)))
}

pub fn compute_gamma_eta(r: &DMatrix<f64>, k: &DMatrix<f64>, v: &DVector<f64>) -> Result<(f64, f64)> {
    compute_gamma_eta_with_radius(r, k, v, 1.0)
}

pub fn check_assumptions(r: &DMatrix<f64>, k: &DMatrix<f64>, v: &DVector<f64>) -> Result<AssumptionReport> {
    let full_displacement = check_full_displacement(r, k)?;
    let no_arbitrage = check_no_arbitrage(r, k, v)?;
    let (gamma, eta) = if no_arbitrage.holds {
        let (g, e) = compute_gamma_eta(r, k, v)?;
        (Some(g), Some(e))
    } else {
        (None, None)
    };
    Ok(AssumptionReport {
        full_displacement,
        no_arbitrage,
        gamma,
        eta,
        norm_note: NORM_NOTE,
    })
}

/// Checks that `y` certifies its defining inequalities within [`FEAS_TOL`].
pub fn verify_displacement_witness(
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
    y: &DVector<f64>,
    target: &DVector<f64>,
) -> bool {
    (r * y - target).amax() <= FEAS_TOL && (k * y).iter().all(|v| *v >= -FEAS_TOL)
}

pub fn verify_arbitrage_ray(r: &DMatrix<f64>, k: &DMatrix<f64>, v: &DVector<f64>, y: &DVector<f64>) -> bool {
    (y.amax() - 1.0).abs() <= FEAS_TOL
        && (k * y).iter().all(|x| *x >= -FEAS_TOL)
        && (r * y).amax() <= FEAS_TOL
        && v.dot(y) <= FEAS_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NetworkData, TwoServerParams};

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn two_server_instance_satisfies_both() {
        let data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        let rep = check_assumptions(&data.r, &data.k, &data.v).unwrap();
        assert!(rep.all_hold());
        for (slot, w) in rep.full_displacement.witnesses.iter().enumerate() {
            let mut e = DVector::zeros(2);
            e[slot % 2] = if slot < 2 { 1.0 } else { -1.0 };
            assert!(verify_displacement_witness(&data.r, &data.k, w.as_ref().unwrap(), &e));
        }
        // -e6 moves the state by (0, -1) and keeps Ky >= 0
        let y = DVector::from_column_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        assert!(verify_displacement_witness(
            &data.r,
            &data.k,
            &y,
            &DVector::from_column_slice(&[0.0, -1.0])
        ));
        assert!(rep.gamma.unwrap().is_finite() && rep.eta.unwrap().is_finite());
    }

    #[test]
    fn one_sided_displacement_fails() {
        let fd = check_full_displacement(&m(1, 2, &[1.0, 0.0]), &DMatrix::identity(2, 2)).unwrap();
        assert!(!fd.holds);
        assert!(fd.witnesses[0].is_some() && fd.witnesses[1].is_none());
    }

    #[test]
    fn opposing_columns_displace_both_ways() {
        let fd = check_full_displacement(&m(1, 2, &[1.0, -1.0]), &DMatrix::identity(2, 2)).unwrap();
        assert!(fd.holds);
    }

    #[test]
    fn arbitrage_instance_returns_ray() {
        let r = m(1, 2, &[1.0, 0.0]);
        let k = DMatrix::identity(2, 2);
        let v = DVector::from_column_slice(&[0.0, -1.0]);
        let na = check_no_arbitrage(&r, &k, &v).unwrap();
        assert!(!na.holds);
        let ray = na.ray.unwrap();
        assert!(verify_arbitrage_ray(&r, &k, &v, &ray));
        assert!(ray[0].abs() < 1e-12 && (ray[1] - 1.0).abs() < 1e-12);
        assert!(compute_gamma_eta(&r, &k, &v).is_err());
    }

    #[test]
    fn scalar_network_has_no_arbitrage() {
        let one = DMatrix::from_element(1, 1, 1.0);
        for v in [1.0, -1.0, 0.0] {
            assert!(
                check_no_arbitrage(&one, &one, &DVector::from_element(1, v))
                    .unwrap()
                    .holds
            );
        }
    }

    #[test]
    fn gamma_eta_scalar_cases() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let (g, e) = compute_gamma_eta(&one, &one, &DVector::from_element(1, 1.0)).unwrap();
        assert!(g.abs() < 1e-12 && e.abs() < 1e-12);
        let (g, e) = compute_gamma_eta(&one, &one, &DVector::from_element(1, -1.0)).unwrap();
        assert!((g - 1.0).abs() < 1e-12 && (e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_eta_are_positively_homogeneous() {
        let data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        let (g1, e1) = compute_gamma_eta_with_radius(&data.r, &data.k, &data.v, 1.0).unwrap();
        let (g2, e2) = compute_gamma_eta_with_radius(&data.r, &data.k, &data.v, 2.0).unwrap();
        assert!((g2 - 2.0 * g1).abs() < 1e-9 * (1.0 + g1));
        assert!((e2 - 2.0 * e1).abs() < 1e-9 * (1.0 + e1));
    }
}
