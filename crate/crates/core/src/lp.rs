//! Dense two-phase simplex with Bland's rule.
//!
//! Problems are stated as
//!
//! ```text
//!     minimize    c'x
//!     subject to  A_eq x  = b_eq
//!                 A_ub x <= b_ub
//!                 l <= x <= u        (l, u possibly infinite)
//! ```
//!
//! and converted internally to standard form `{A s = b, s >= 0}`. Every
//! problem solved here has at most a few dozen variables, so the tableau is
//! dense and reduced costs are recomputed from scratch at every pivot.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Tolerance on constraint satisfaction of returned points and rays.
pub const FEAS_TOL: f64 = 1e-8;
/// Smallest admissible pivot magnitude.
pub const PIVOT_TOL: f64 = 1e-10;
const REDUCED_COST_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub const FREE: Bound = Bound {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
    pub const NONNEG: Bound = Bound {
        lower: 0.0,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Self {
        Bound { lower, upper }
    }

    pub fn at_least(lower: f64) -> Self {
        Bound {
            lower,
            upper: f64::INFINITY,
        }
    }

    pub fn at_most(upper: f64) -> Self {
        Bound {
            lower: f64::NEG_INFINITY,
            upper,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub bounds: Vec<Bound>,
}

impl LpProblem {
    /// Unconstrained problem over free variables.
    pub fn new(c: DVector<f64>) -> Self {
        let n = c.len();
        LpProblem {
            c,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_ub: DMatrix::zeros(0, n),
            b_ub: DVector::zeros(0),
            bounds: vec![Bound::FREE; n],
        }
    }

    /// Pure feasibility problem (zero objective).
    pub fn feasibility(n: usize) -> Self {
        Self::new(DVector::zeros(n))
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn with_eq(mut self, a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        self.a_eq = stack_rows(&self.a_eq, a);
        self.b_eq = stack_vec(&self.b_eq, b);
        self
    }

    pub fn with_ub(mut self, a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        self.a_ub = stack_rows(&self.a_ub, a);
        self.b_ub = stack_vec(&self.b_ub, b);
        self
    }

    /// Adds `a x >= b` as `-a x <= -b`.
    pub fn with_lb(self, a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        self.with_ub(&(-a), &(-b))
    }

    pub fn with_bounds(mut self, bounds: Vec<Bound>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn with_bound(mut self, j: usize, bound: Bound) -> Self {
        self.bounds[j] = bound;
        self
    }

    fn check_dims(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let mut problems = Vec::new();
        if self.a_eq.ncols() != n && self.a_eq.nrows() > 0 {
            problems.push(format!("A_eq has {} columns, expected {n}", self.a_eq.ncols()));
        }
        if self.a_eq.nrows() != self.b_eq.len() {
            problems.push(format!(
                "A_eq has {} rows but b_eq has {} entries",
                self.a_eq.nrows(),
                self.b_eq.len()
            ));
        }
        if self.a_ub.ncols() != n && self.a_ub.nrows() > 0 {
            problems.push(format!("A_ub has {} columns, expected {n}", self.a_ub.ncols()));
        }
        if self.a_ub.nrows() != self.b_ub.len() {
            problems.push(format!(
                "A_ub has {} rows but b_ub has {} entries",
                self.a_ub.nrows(),
                self.b_ub.len()
            ));
        }
        if self.bounds.len() != n {
            problems.push(format!("{} bounds for {n} variables", self.bounds.len()));
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if b.lower.is_nan() || b.upper.is_nan() || b.lower == f64::INFINITY || b.upper == f64::NEG_INFINITY {
                problems.push(format!("bound {j} is not a valid interval"));
            }
        }
        let finite = self.c.iter().chain(self.a_eq.iter()).chain(self.b_eq.iter());
        let finite = finite.chain(self.a_ub.iter()).chain(self.b_ub.iter());
        if finite.into_iter().any(|v| !v.is_finite()) {
            problems.push("non-finite coefficient".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(LpError::Dimension(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal {
        x: DVector<f64>,
        value: f64,
    },
    Infeasible,
    /// `ray` satisfies `A_eq r = 0`, `A_ub r <= 0`, `c'r < 0` and lies in the
    /// recession cone of the bounds. Normalized to unit infinity norm.
    Unbounded {
        ray: DVector<f64>,
    },
}

impl LpOutcome {
    pub fn is_optimal(&self) -> bool {
        matches!(self, LpOutcome::Optimal { .. })
    }

    pub fn optimal(&self) -> Option<(&DVector<f64>, f64)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, *value)),
            _ => None,
        }
    }
}

/// How an original variable is expressed through nonnegative standard-form columns.
#[derive(Debug, Clone, Copy)]
enum ColumnMap {
    /// x = lower + s
    Shifted { col: usize, lower: f64 },
    /// x = upper - s
    Reflected { col: usize, upper: f64 },
    /// x = s+ - s-
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    maps: Vec<ColumnMap>,
    /// Row-major constraint matrix over the structural and slack columns.
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Column of a +1 slack usable as an initial basic variable, per row.
    slack_of_row: Vec<Option<usize>>,
    cost: Vec<f64>,
    cost_offset: f64,
}

impl StandardForm {
    fn build(prob: &LpProblem) -> Self {
        let n = prob.num_vars();
        let mut maps = Vec::with_capacity(n);
        let mut ncols = 0usize;
        for b in &prob.bounds {
            if b.lower.is_finite() {
                maps.push(ColumnMap::Shifted {
                    col: ncols,
                    lower: b.lower,
                });
                ncols += 1;
            } else if b.upper.is_finite() {
                maps.push(ColumnMap::Reflected {
                    col: ncols,
                    upper: b.upper,
                });
                ncols += 1;
            } else {
                maps.push(ColumnMap::Split {
                    pos: ncols,
                    neg: ncols + 1,
                });
                ncols += 2;
            }
        }
        let structural = ncols;
        let n_ub_bounds = prob
            .bounds
            .iter()
            .filter(|b| b.lower.is_finite() && b.upper.is_finite())
            .count();
        let n_slack = prob.a_ub.nrows() + n_ub_bounds;
        let total = structural + n_slack;

        let substitute = |coeffs: &mut Vec<f64>, rhs: &mut f64, j: usize, a: f64| match maps[j] {
            ColumnMap::Shifted { col, lower } => {
                coeffs[col] += a;
                *rhs -= a * lower;
            }
            ColumnMap::Reflected { col, upper } => {
                coeffs[col] -= a;
                *rhs -= a * upper;
            }
            ColumnMap::Split { pos, neg } => {
                coeffs[pos] += a;
                coeffs[neg] -= a;
            }
        };

        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        let mut slack_of_row = Vec::new();
        for i in 0..prob.a_eq.nrows() {
            let mut coeffs = vec![0.0; total];
            let mut r = prob.b_eq[i];
            for j in 0..n {
                substitute(&mut coeffs, &mut r, j, prob.a_eq[(i, j)]);
            }
            rows.push(coeffs);
            rhs.push(r);
            slack_of_row.push(None);
        }
        let mut slack = structural;
        for i in 0..prob.a_ub.nrows() {
            let mut coeffs = vec![0.0; total];
            let mut r = prob.b_ub[i];
            for j in 0..n {
                substitute(&mut coeffs, &mut r, j, prob.a_ub[(i, j)]);
            }
            coeffs[slack] = 1.0;
            rows.push(coeffs);
            rhs.push(r);
            slack_of_row.push(Some(slack));
            slack += 1;
        }
        for (j, b) in prob.bounds.iter().enumerate() {
            if let (true, true, ColumnMap::Shifted { col, .. }) = (b.lower.is_finite(), b.upper.is_finite(), maps[j]) {
                let mut coeffs = vec![0.0; total];
                coeffs[col] = 1.0;
                coeffs[slack] = 1.0;
                rows.push(coeffs);
                rhs.push(b.upper - b.lower);
                slack_of_row.push(Some(slack));
                slack += 1;
            }
        }

        let mut cost = vec![0.0; total];
        let mut cost_offset = 0.0;
        for j in 0..n {
            let cj = prob.c[j];
            match maps[j] {
                ColumnMap::Shifted { col, lower } => {
                    cost[col] += cj;
                    cost_offset += cj * lower;
                }
                ColumnMap::Reflected { col, upper } => {
                    cost[col] -= cj;
                    cost_offset += cj * upper;
                }
                ColumnMap::Split { pos, neg } => {
                    cost[pos] += cj;
                    cost[neg] -= cj;
                }
            }
        }

        // Nonnegative right-hand sides; a negated row loses its slack as a starting basis.
        for i in 0..rows.len() {
            if rhs[i] < 0.0 {
                rhs[i] = -rhs[i];
                rows[i].iter_mut().for_each(|v| *v = -*v);
                slack_of_row[i] = None;
            }
        }

        StandardForm {
            maps,
            rows,
            rhs,
            slack_of_row,
            cost,
            cost_offset,
        }
    }

    fn to_original(&self, s: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.maps.len(),
            self.maps.iter().map(|m| match *m {
                ColumnMap::Shifted { col, lower } => lower + s[col],
                ColumnMap::Reflected { col, upper } => upper - s[col],
                ColumnMap::Split { pos, neg } => s[pos] - s[neg],
            }),
        )
    }

    fn ray_to_original(&self, d: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.maps.len(),
            self.maps.iter().map(|m| match *m {
                ColumnMap::Shifted { col, .. } => d[col],
                ColumnMap::Reflected { col, .. } => -d[col],
                ColumnMap::Split { pos, neg } => d[pos] - d[neg],
            }),
        )
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    max_pivots: usize,
    pivots: usize,
}

enum PhaseResult {
    Optimal,
    Unbounded { entering: usize },
}

impl Tableau {
    fn pivot(&mut self, r: usize, q: usize) {
        let p = self.rows[r][q];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        self.rows[r][q] = 1.0;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][q];
            if f == 0.0 {
                continue;
            }
            for (v, pv) in self.rows[i].iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.rows[i][q] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
            if self.rhs[i] < 0.0 && self.rhs[i] > -1e-12 {
                self.rhs[i] = 0.0;
            }
        }
        self.basis[r] = q;
        self.pivots += 1;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut rc = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (r, v) in rc.iter_mut().zip(&self.rows[i]) {
                    *r -= cb * v;
                }
            }
        }
        rc
    }

    /// Runs the simplex method over the columns allowed by `eligible`.
    fn run(&mut self, cost: &[f64], eligible: &[bool]) -> Result<PhaseResult, LpError> {
        loop {
            if self.pivots > self.max_pivots {
                return Err(LpError::NumericalFailure(format!(
                    "pivot limit {} exceeded",
                    self.max_pivots
                )));
            }
            let rc = self.reduced_costs(cost);
            let mut is_basic = vec![false; self.ncols];
            for &b in &self.basis {
                is_basic[b] = true;
            }
            // Bland: lowest-index improving column.
            let entering = (0..self.ncols).find(|&j| eligible[j] && !is_basic[j] && rc[j] < -REDUCED_COST_TOL);
            let Some(q) = entering else {
                return Ok(PhaseResult::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][q];
                if a > PIVOT_TOL {
                    let ratio = self.rhs[i].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                            if (tie && self.basis[i] < self.basis[k]) || (!tie && ratio < best) {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, q),
                None => return Ok(PhaseResult::Unbounded { entering: q }),
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.ncols];
        for (i, &b) in self.basis.iter().enumerate() {
            s[b] = self.rhs[i].max(0.0);
        }
        s
    }
}

pub fn solve_lp(prob: &LpProblem) -> Result<LpOutcome, LpError> {
    prob.check_dims()?;
    let sf = StandardForm::build(prob);
    let nrows = sf.rows.len();
    let nstd = sf.cost.len();

    // Artificial columns only for rows without a usable slack.
    let needs_art: Vec<usize> = (0..nrows).filter(|&i| sf.slack_of_row[i].is_none()).collect();
    let ncols = nstd + needs_art.len();
    let mut rows = Vec::with_capacity(nrows);
    let mut basis = vec![0usize; nrows];
    let mut art = nstd;
    for i in 0..nrows {
        let mut row = sf.rows[i].clone();
        row.resize(ncols, 0.0);
        match sf.slack_of_row[i] {
            Some(s) => basis[i] = s,
            None => {
                row[art] = 1.0;
                basis[i] = art;
                art += 1;
            }
        }
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        rhs: sf.rhs.clone(),
        basis,
        ncols,
        max_pivots: 50 * (nrows + ncols) + 1000,
        pivots: 0,
    };

    let rhs_scale = 1.0 + sf.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !needs_art.is_empty() {
        let mut phase1_cost = vec![0.0; ncols];
        phase1_cost[nstd..].iter_mut().for_each(|c| *c = 1.0);
        let eligible = vec![true; ncols];
        // Phase 1 is bounded below by zero; an "unbounded" verdict means breakdown.
        if let PhaseResult::Unbounded { .. } = tab.run(&phase1_cost, &eligible)? {
            return Err(LpError::NumericalFailure("phase 1 reported unbounded".into()));
        }
        let infeas: f64 = tab
            .basis
            .iter()
            .zip(&tab.rhs)
            .filter(|(&b, _)| b >= nstd)
            .map(|(_, &v)| v)
            .sum();
        if infeas > FEAS_TOL * rhs_scale {
            return Ok(LpOutcome::Infeasible);
        }
        // Drive remaining artificials out of the basis, dropping redundant rows.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= nstd {
                let q = (0..nstd).find(|&j| tab.rows[i][j].abs() > PIVOT_TOL && !tab.basis.contains(&j));
                match q {
                    Some(q) => tab.pivot(i, q),
                    None => {
                        tab.rows.remove(i);
                        tab.rhs.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut cost = sf.cost.clone();
    cost.resize(ncols, 0.0);
    let eligible: Vec<bool> = (0..ncols).map(|j| j < nstd).collect();
    match tab.run(&cost, &eligible)? {
        PhaseResult::Optimal => {
            let s = tab.values();
            let x = sf.to_original(&s[..nstd]);
            let value = prob.c.dot(&x);
            debug_assert!(
                (value - (sf.cost_offset + cost.iter().zip(&s).map(|(c, v)| c * v).sum::<f64>())).abs()
                    < 1e-6 * (1.0 + value.abs())
            );
            verify_point(prob, &x)?;
            Ok(LpOutcome::Optimal { x, value })
        }
        PhaseResult::Unbounded { entering } => {
            let mut d = vec![0.0; ncols];
            d[entering] = 1.0;
            for (i, &b) in tab.basis.iter().enumerate() {
                d[b] = -tab.rows[i][entering];
            }
            let mut ray = sf.ray_to_original(&d[..nstd]);
            let norm = ray.amax();
            if norm <= PIVOT_TOL {
                return Err(LpError::NumericalFailure("degenerate unbounded direction".into()));
            }
            ray /= norm;
            verify_ray(prob, &ray)?;
            Ok(LpOutcome::Unbounded { ray })
        }
    }
}

fn verify_point(prob: &LpProblem, x: &DVector<f64>) -> Result<(), LpError> {
    let tol = |b: f64| FEAS_TOL * (1.0 + b.abs());
    if prob.a_eq.nrows() > 0 {
        let r = &prob.a_eq * x - &prob.b_eq;
        for (i, v) in r.iter().enumerate() {
            if v.abs() > tol(prob.b_eq[i]) {
                return Err(LpError::NumericalFailure(format!(
                    "equality row {i} violated by {v:.3e}"
                )));
            }
        }
    }
    if prob.a_ub.nrows() > 0 {
        let r = &prob.a_ub * x - &prob.b_ub;
        for (i, v) in r.iter().enumerate() {
            if *v > tol(prob.b_ub[i]) {
                return Err(LpError::NumericalFailure(format!(
                    "inequality row {i} violated by {v:.3e}"
                )));
            }
        }
    }
    for (j, b) in prob.bounds.iter().enumerate() {
        if x[j] < b.lower - tol(b.lower) || x[j] > b.upper + tol(b.upper) {
            return Err(LpError::NumericalFailure(format!("bound on variable {j} violated")));
        }
    }
    Ok(())
}

fn verify_ray(prob: &LpProblem, r: &DVector<f64>) -> Result<(), LpError> {
    let bad = |what: &str| Err(LpError::NumericalFailure(format!("ray certificate fails: {what}")));
    if prob.a_eq.nrows() > 0 && (&prob.a_eq * r).amax() > FEAS_TOL {
        return bad("A_eq r != 0");
    }
    if prob.a_ub.nrows() > 0 && (&prob.a_ub * r).max() > FEAS_TOL {
        return bad("A_ub r > 0");
    }
    if prob.c.dot(r) >= -FEAS_TOL {
        return bad("c'r >= 0");
    }
    for (j, b) in prob.bounds.iter().enumerate() {
        if (b.lower.is_finite() && r[j] < -FEAS_TOL) || (b.upper.is_finite() && r[j] > FEAS_TOL) {
            return bad("ray leaves the variable bounds");
        }
    }
    Ok(())
}

/// Zero-objective wrapper around [`solve_lp`]. Returns a witness when feasible.
pub fn lp_feasible(
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_ub: &DMatrix<f64>,
    b_ub: &DVector<f64>,
    bounds: &[Bound],
) -> Result<Option<DVector<f64>>, LpError> {
    let n = bounds.len();
    let prob = LpProblem::feasibility(n)
        .with_eq(a_eq, b_eq)
        .with_ub(a_ub, b_ub)
        .with_bounds(bounds.to_vec());
    match solve_lp(&prob)? {
        LpOutcome::Optimal { x, .. } => Ok(Some(x)),
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded { .. } => Err(LpError::NumericalFailure("zero objective reported unbounded".into())),
    }
}

pub(crate) fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 {
        return b.clone();
    }
    if b.nrows() == 0 {
        return a.clone();
    }
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols().max(b.ncols()));
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
    out
}

fn stack_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}
