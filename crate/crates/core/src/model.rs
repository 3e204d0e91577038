//! Network data, state-space polytopes, quadratic holding costs and instance files.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, matrix_from_rows, matrix_to_rows};
use crate::lp::{self, Bound, LpOutcome, LpProblem};

/// Slack required for the interior certificate of a polytope.
pub const INTERIOR_EPS: f64 = 1e-9;
/// Membership tolerance for `z° ∈ Z`.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// A bounded polyhedron `{z : A z <= b}` with nonempty interior.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// Coordinate-wise bounding box, from the boundedness certificate.
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl Polytope {
    /// Certifies nonemptiness, boundedness and a nonempty interior by LP.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "polytope has {} rows in A but {} entries in b",
                a.nrows(),
                b.len()
            )));
        }
        let m = a.ncols();
        if m == 0 {
            return Err(Error::Polytope("zero-dimensional state space".into()));
        }
        let free = vec![Bound::FREE; m];
        let feasible = lp::lp_feasible(&DMatrix::zeros(0, m), &DVector::zeros(0), &a, &b, &free)?;
        if feasible.is_none() {
            return Err(Error::Polytope("empty".into()));
        }
        let mut lower = DVector::zeros(m);
        let mut upper = DVector::zeros(m);
        for i in 0..m {
            for sign in [1.0, -1.0] {
                let mut c = DVector::zeros(m);
                c[i] = sign;
                let prob = LpProblem::new(c).with_ub(&a, &b);
                match lp::solve_lp(&prob)? {
                    LpOutcome::Optimal { value, .. } => {
                        if sign > 0.0 {
                            lower[i] = value;
                        } else {
                            upper[i] = -value;
                        }
                    }
                    LpOutcome::Unbounded { ray } => {
                        return Err(Error::Polytope(format!(
                            "unbounded along coordinate {i} (recession direction {:?})",
                            ray.as_slice()
                        )))
                    }
                    LpOutcome::Infeasible => return Err(Error::Polytope("empty".into())),
                }
            }
        }
        // maximize t subject to A z + t 1 <= b, t <= 1
        let mut c = DVector::zeros(m + 1);
        c[m] = -1.0;
        let mut a_ext = DMatrix::zeros(a.nrows(), m + 1);
        a_ext.view_mut((0, 0), (a.nrows(), m)).copy_from(&a);
        a_ext.column_mut(m).fill(1.0);
        let prob = LpProblem::new(c).with_ub(&a_ext, &b).with_bound(m, Bound::at_most(1.0));
        let slack = match lp::solve_lp(&prob)? {
            LpOutcome::Optimal { value, .. } => -value,
            _ => f64::NEG_INFINITY,
        };
        if slack < INTERIOR_EPS {
            return Err(Error::Polytope(format!("empty interior (max slack {slack:.3e})")));
        }
        Ok(Polytope { a, b, lower, upper })
    }

    /// The box `[0, upper_1] x ... x [0, upper_m]`.
    pub fn boxed(upper: &[f64]) -> Result<Self> {
        let m = upper.len();
        let mut a = DMatrix::zeros(2 * m, m);
        let mut b = DVector::zeros(2 * m);
        for i in 0..m {
            a[(i, i)] = 1.0;
            b[i] = upper[i];
            a[(m + i, i)] = -1.0;
        }
        Self::new(a, b)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    /// Coordinate bounds `(min z_i, max z_i)` over the polytope.
    pub fn bounding_box(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.lower, &self.upper)
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        polytope_contains(self, z, tol)
    }

    /// Largest violation `max_i (A z - b)_i`, clamped below at zero.
    pub fn violation(&self, z: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.a.nrows() {
            let mut s = -self.b[i];
            for (j, zj) in z.iter().enumerate() {
                s += self.a[(i, j)] * zj;
            }
            worst = worst.max(s);
        }
        worst
    }

    /// Vertices by enumeration of `dim`-subsets of the constraints.
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let m = self.dim();
        let rows = self.a.nrows();
        let mut out: Vec<DVector<f64>> = Vec::new();
        let mut idx: Vec<usize> = (0..m).collect();
        if rows < m {
            return out;
        }
        loop {
            let sub = DMatrix::from_fn(m, m, |i, j| self.a[(idx[i], j)]);
            let rhs = DVector::from_fn(m, |i, _| self.b[idx[i]]);
            if let Some(z) = sub.lu().solve(&rhs) {
                if z.iter().all(|v| v.is_finite())
                    && self.contains(&z, 1e-9)
                    && !out.iter().any(|o| (o - &z).amax() < 1e-9)
                {
                    out.push(z);
                }
            }
            // next combination
            let mut i = m;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if idx[i] < rows - m + i {
                    idx[i] += 1;
                    for j in i + 1..m {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
}

/// True iff `A z <= b + tol` componentwise.
pub fn polytope_contains(p: &Polytope, z: &DVector<f64>, tol: f64) -> bool {
    z.len() == p.dim() && p.violation(z.as_slice()) <= tol
}

/// `h(z) = z'Qz + c'z + c0` with `Q` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub c0: f64,
    strictly_convex: bool,
}

impl QuadraticCost {
    pub fn new(q: DMatrix<f64>, c: DVector<f64>, c0: f64) -> Result<Self> {
        if q.nrows() != q.ncols() || q.nrows() != c.len() {
            return Err(Error::Dimension(format!(
                "holding cost Q is {}x{} with c of length {}",
                q.nrows(),
                q.ncols(),
                c.len()
            )));
        }
        let asym = linalg::asymmetry(&q);
        if asym > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "Q is not symmetric (max |Q - Q'| = {asym:.3e})"
            )));
        }
        let eig = linalg::symmetric_eigenvalues(&q);
        let min_eig = eig.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        let scale = 1.0 + linalg::max_abs(&q);
        if min_eig < -1e-12 * scale {
            return Err(Error::InvalidInput(format!(
                "Q is not positive semidefinite (eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(QuadraticCost {
            strictly_convex: min_eig >= 1e-10,
            q,
            c,
            c0,
        })
    }

    /// `h(z) = Σ diag_i z_i²`.
    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let m = diag.len();
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
            DVector::zeros(m),
            0.0,
        )
    }

    pub fn constant(m: usize, c0: f64) -> Self {
        QuadraticCost {
            q: DMatrix::zeros(m, m),
            c: DVector::zeros(m),
            c0,
            strictly_convex: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn is_strictly_convex(&self) -> bool {
        self.strictly_convex
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let m = self.dim();
        let mut s = self.c0;
        for i in 0..m {
            let mut qi = 0.0;
            for j in 0..m {
                qi += self.q[(i, j)] * z[j];
            }
            s += z[i] * qi + self.c[i] * z[i];
        }
        s
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.q * z * 2.0 + &self.c
    }

    /// An upper bound on `sup |h|` over a polytope.
    ///
    /// The maximum of a convex function over a polytope sits at a vertex; the
    /// minimum is bounded below by the tangent plane at the vertex centroid.
    pub fn sup_abs_over(&self, p: &Polytope) -> f64 {
        let verts = p.vertices();
        if verts.is_empty() {
            return f64::INFINITY;
        }
        let max = verts
            .iter()
            .map(|v| self.eval(v.as_slice()))
            .fold(f64::NEG_INFINITY, f64::max);
        let centroid = verts.iter().fold(DVector::zeros(self.dim()), |acc, v| acc + v) / verts.len() as f64;
        let grad = self.gradient(&centroid);
        let base = self.eval(centroid.as_slice());
        let min = verts
            .iter()
            .map(|v| base + grad.dot(&(v - &centroid)))
            .fold(f64::INFINITY, f64::min);
        max.abs().max(min.abs())
    }
}

/// A Brownian network control problem instance.
#[derive(Debug, Clone)]
pub struct NetworkData {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub z0: DVector<f64>,
    pub theta: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub state_space: Polytope,
    pub v: DVector<f64>,
    pub h: QuadraticCost,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name,
            passed,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            writeln!(f, "[{mark}] {}: {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

pub fn validate_network(data: &NetworkData) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let (m, n, p) = (data.m, data.n, data.p);
    rep.push(
        "positive dimensions",
        m > 0 && n > 0 && p > 0,
        format!("m = {m}, n = {n}, p = {p}"),
    );

    let shape = |rows: usize, cols: usize, want_r: usize, want_c: usize| rows == want_r && cols == want_c;
    rep.push(
        "z0 dimension",
        data.z0.len() == m,
        format!("len {} (m = {m})", data.z0.len()),
    );
    rep.push(
        "theta dimension",
        data.theta.len() == m,
        format!("len {} (m = {m})", data.theta.len()),
    );
    let sigma_ok = shape(data.sigma.nrows(), data.sigma.ncols(), m, m);
    rep.push(
        "Sigma shape",
        sigma_ok,
        format!("{}x{} (expected {m}x{m})", data.sigma.nrows(), data.sigma.ncols()),
    );
    rep.push(
        "R shape",
        shape(data.r.nrows(), data.r.ncols(), m, n),
        format!("{}x{} (expected {m}x{n})", data.r.nrows(), data.r.ncols()),
    );
    rep.push(
        "K shape",
        shape(data.k.nrows(), data.k.ncols(), p, n),
        format!("{}x{} (expected {p}x{n})", data.k.nrows(), data.k.ncols()),
    );
    rep.push(
        "v dimension",
        data.v.len() == n,
        format!("len {} (n = {n})", data.v.len()),
    );
    rep.push(
        "h dimension",
        data.h.dim() == m,
        format!("dim {} (m = {m})", data.h.dim()),
    );
    rep.push(
        "Z dimension",
        data.state_space.dim() == m,
        format!("dim {} (m = {m})", data.state_space.dim()),
    );

    if sigma_ok {
        let asym = linalg::asymmetry(&data.sigma);
        rep.push("Sigma symmetric", asym <= 1e-12, format!("max |S - S'| = {asym:.3e}"));
        let chol = linalg::cholesky_lower(&data.sigma).is_some();
        rep.push(
            "Sigma positive definite",
            chol,
            if chol { "Cholesky succeeded" } else { "Cholesky failed" },
        );
    }
    if data.z0.len() == data.state_space.dim() {
        let viol = data.state_space.violation(data.z0.as_slice());
        rep.push("z0 in Z", viol <= MEMBERSHIP_TOL, format!("max violation {viol:.3e}"));
    }
    rep.push(
        "alpha positive",
        data.alpha > 0.0 && data.alpha.is_finite(),
        format!("alpha = {}", data.alpha),
    );
    rep
}

impl NetworkData {
    pub fn validate(&self) -> ValidationReport {
        validate_network(self)
    }

    /// Validates and turns a failed report into an error.
    pub fn ensure_valid(&self) -> Result<()> {
        let rep = self.validate();
        if rep.passed() {
            Ok(())
        } else {
            let msg: Vec<String> = rep.failures().map(|c| format!("{}: {}", c.name, c.detail)).collect();
            Err(Error::InvalidInput(msg.join("; ")))
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(s)?;
        file.into_network()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_instance_file(&self) -> InstanceFile {
        InstanceFile {
            m: self.m,
            n: self.n,
            p: self.p,
            z0: self.z0.iter().copied().collect(),
            theta: self.theta.iter().copied().collect(),
            sigma: matrix_to_rows(&self.sigma),
            r: matrix_to_rows(&self.r),
            k: matrix_to_rows(&self.k),
            z: StateSpaceConfig::Halfspaces {
                a: matrix_to_rows(self.state_space.a()),
                b: self.state_space.b().iter().copied().collect(),
            },
            v: self.v.iter().copied().collect(),
            h: HoldingConfig {
                q: matrix_to_rows(&self.h.q),
                c: self.h.c.iter().copied().collect(),
                c0: self.h.c0,
            },
            alpha: self.alpha,
        }
    }

    /// The two-server, two-class processing network with six activities.
    pub fn two_server(params: &TwoServerParams) -> Result<Self> {
        let r = DMatrix::from_row_slice(2, 6, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 3.0, 0.0, 1.0]);
        #[rustfmt::skip]
        let k = DMatrix::from_row_slice(5, 6, &[
            1.0, 0.0, 0.0, 1.0, 0.0, 0.0,
            0.0, 1.0, 1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, -1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0, -1.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 0.0, -1.0,
        ]);
        Ok(NetworkData {
            m: 2,
            n: 6,
            p: 5,
            z0: DVector::zeros(2),
            theta: DVector::zeros(2),
            sigma: DMatrix::from_row_slice(2, 2, &[2.2, 0.0, 0.0, 1.6]),
            r,
            k,
            state_space: Polytope::boxed(&[params.b, params.b])?,
            v: DVector::from_column_slice(&[1.0, 1.0, 1.0, params.v4, 0.0, 0.0]),
            h: QuadraticCost::diagonal(&[params.a1, params.a2])?,
            alpha: params.alpha,
        })
    }
}

/// Parameters of the two-server example network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoServerParams {
    pub a1: f64,
    pub a2: f64,
    /// Buffer capacity in scaled units; `Z = [0, b]^2`.
    pub b: f64,
    /// Value rate of the fourth activity, `0 < v4 < 3/2`.
    pub v4: f64,
    pub alpha: f64,
}

impl Default for TwoServerParams {
    fn default() -> Self {
        TwoServerParams {
            a1: 1.0,
            a2: 1.0,
            b: 10.0,
            v4: 1.2,
            alpha: 0.1,
        }
    }
}

// ---------------------------------------------------------------------------
// Instance file schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxUpper {
    Uniform(f64),
    PerCoordinate(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpaceConfig {
    Box {
        #[serde(rename = "box")]
        upper: BoxUpper,
    },
    Halfspaces {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoldingConfig {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    #[serde(default)]
    pub c0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub z0: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(rename = "Sigma")]
    pub sigma: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "Z")]
    pub z: StateSpaceConfig,
    pub v: Vec<f64>,
    pub h: HoldingConfig,
    pub alpha: f64,
}

impl InstanceFile {
    pub fn into_network(self) -> Result<NetworkData> {
        let mat = |name: &str, rows: &[Vec<f64>], cols: usize| {
            matrix_from_rows(rows, cols).ok_or_else(|| Error::Dimension(format!("{name} has ragged rows")))
        };
        let sigma = mat("Sigma", &self.sigma, self.m)?;
        let r = mat("R", &self.r, self.n)?;
        let k = mat("K", &self.k, self.n)?;
        let state_space = match &self.z {
            StateSpaceConfig::Box { upper } => {
                let up = match upper {
                    BoxUpper::Uniform(b) => vec![*b; self.m],
                    BoxUpper::PerCoordinate(v) => v.clone(),
                };
                Polytope::boxed(&up)?
            }
            StateSpaceConfig::Halfspaces { a, b } => {
                let a = mat("Z.A", a, self.m)?;
                Polytope::new(a, DVector::from_column_slice(b))?
            }
        };
        let q = mat("h.Q", &self.h.q, self.m)?;
        let h = QuadraticCost::new(q, DVector::from_column_slice(&self.h.c), self.h.c0)?;
        Ok(NetworkData {
            m: self.m,
            n: self.n,
            p: self.p,
            z0: DVector::from_column_slice(&self.z0),
            theta: DVector::from_column_slice(&self.theta),
            sigma,
            r,
            k,
            state_space,
            v: DVector::from_column_slice(&self.v),
            h,
            alpha: self.alpha,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_server_instance_validates() {
        let data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        let rep = data.validate();
        assert!(rep.passed(), "{rep}");
        assert!(rep.check("Sigma positive definite").unwrap().passed);
    }

    #[test]
    fn start_outside_box_fails() {
        let mut data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        data.z0 = DVector::from_column_slice(&[11.0, 0.0]);
        let rep = data.validate();
        assert!(!rep.passed());
        let failed: Vec<_> = rep.failures().map(|c| c.name).collect();
        assert_eq!(failed, vec!["z0 in Z"]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        data.k = DMatrix::zeros(5, 5);
        let rep = data.validate();
        assert!(!rep.check("K shape").unwrap().passed);
    }

    #[test]
    fn box_membership() {
        let p = Polytope::boxed(&[10.0, 10.0]).unwrap();
        assert!(polytope_contains(&p, &DVector::from_column_slice(&[5.0, 5.0]), 0.0));
        assert!(polytope_contains(
            &p,
            &DVector::from_column_slice(&[10.0 + 1e-10, 0.0]),
            1e-9
        ));
        assert!(!polytope_contains(&p, &DVector::from_column_slice(&[-1.0, 0.0]), 1e-9));
    }

    #[test]
    fn unbounded_polytope_rejected() {
        let err = Polytope::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_element(1, 1.0),
        );
        assert!(matches!(err, Err(Error::Polytope(_))));
    }

    #[test]
    fn flat_polytope_rejected() {
        // 0 <= z1 <= 0, 0 <= z2 <= 1
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = DVector::from_column_slice(&[0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(Polytope::new(a, b), Err(Error::Polytope(_))));
    }

    #[test]
    fn vertices_of_triangle() {
        let a = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]);
        let p = Polytope::new(a, DVector::from_column_slice(&[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(p.vertices().len(), 3);
    }

    #[test]
    fn sup_abs_of_two_server_cost() {
        let data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        assert!((data.h.sup_abs_over(&data.state_space) - 200.0).abs() < 1e-9);
    }

    #[test]
    fn json_roundtrip_preserves_instance() {
        let data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        let text = serde_json::to_string(&data.to_instance_file()).unwrap();
        let back = NetworkData::from_json_str(&text).unwrap();
        assert_eq!(back.r, data.r);
        assert_eq!(back.state_space, data.state_space);
    }

    #[test]
    fn asymmetric_q_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(QuadraticCost::new(q, DVector::zeros(2), 0.0).is_err());
    }
}
