//! Workload reduction: null and reversible spaces, the workload matrix `M`,
//! effort matrix `G`, pseudo-inverses `K†`, `R†` and dual prices `(π, κ)`.
//!
//! Notation follows the usual Brownian-network conventions: `N = ker K`
//! holds the control directions that leave `KY` unchanged, `𝓡 = R N` the
//! reversible displacements, and the rows of `M` span `𝓜 = 𝓡⊥`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, max_abs, max_abs_vec, pinv};
use crate::lp::{self, Bound, LpOutcome, LpProblem};
use crate::model::{NetworkData, Polytope};

/// Scale-free tolerance for the identity residuals.
pub const IDENTITY_RTOL: f64 = 1e-10;
/// Orthogonality tolerance for a user-supplied workload matrix.
pub const OVERRIDE_TOL: f64 = 1e-9;
/// Tolerance on the compatibility preconditions of [`recover_control`].
pub const RECOVER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// `max |MR - GK|`
    pub mr_minus_gk: f64,
    /// `max |v' - π'R - κ'K|`
    pub dual_identity: f64,
    /// `max |M · Rev_basis|`
    pub m_times_rev: f64,
}

#[derive(Debug, Clone)]
pub struct WorkloadReduction {
    /// Orthonormal columns spanning `N = {y : Ky = 0}` (n × dim N).
    pub n_basis: DMatrix<f64>,
    /// Orthonormal columns spanning `𝓡 = {Ry : y ∈ N}` (m × dim 𝓡).
    pub rev_basis: DMatrix<f64>,
    /// Workload matrix (d × m).
    pub m: DMatrix<f64>,
    pub d: usize,
    /// n × p
    pub kdag: DMatrix<f64>,
    /// n × m
    pub rdag: DMatrix<f64>,
    /// d × p
    pub g: DMatrix<f64>,
    pub pi: DVector<f64>,
    pub kappa: DVector<f64>,
    pub residuals: Residuals,
}

/// The workload state space `W = {Mz : z ∈ Z}`.
#[derive(Debug, Clone)]
pub enum WorkloadSpace {
    /// `d = 0`: the single point zero.
    Point,
    /// `d = 1`: an interval computed by two LPs.
    Interval { lo: f64, hi: f64 },
    /// `d >= 2`: kept as the preimage description; membership by LP.
    Preimage { m: DMatrix<f64>, z: Polytope },
}

impl WorkloadSpace {
    pub fn contains(&self, w: &[f64], tol: f64) -> Result<bool> {
        match self {
            WorkloadSpace::Point => Ok(w.is_empty()),
            WorkloadSpace::Interval { lo, hi } => Ok(w.len() == 1 && w[0] >= lo - tol && w[0] <= hi + tol),
            WorkloadSpace::Preimage { m, z } => {
                if w.len() != m.nrows() {
                    return Ok(false);
                }
                let dim = z.dim();
                let wv = DVector::from_column_slice(w);
                let b_relaxed = z.b().map(|b| b + tol);
                let witness = lp::lp_feasible(m, &wv, z.a(), &b_relaxed, &vec![Bound::FREE; dim])?;
                Ok(witness.is_some())
            }
        }
    }

    pub fn interval(&self) -> Option<(f64, f64)> {
        match self {
            WorkloadSpace::Interval { lo, hi } => Some((*lo, *hi)),
            _ => None,
        }
    }
}

/// The reduced (workload) Brownian network.
#[derive(Debug, Clone)]
pub struct ReducedNetworkData {
    pub d: usize,
    pub p: usize,
    pub w0: DVector<f64>,
    pub vartheta: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub space: WorkloadSpace,
}

pub fn null_space_basis(k: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::null_space_basis(k)
}

/// Orthonormal basis of `𝓡 = range(R · N_basis)`.
pub fn reversible_basis(r: &DMatrix<f64>, n_basis: &DMatrix<f64>) -> DMatrix<f64> {
    if n_basis.ncols() == 0 {
        return DMatrix::zeros(r.nrows(), 0);
    }
    let basis = linalg::column_space_basis(&(r * n_basis));
    let mut out = basis.clone();
    for (j, col) in basis.column_iter().enumerate() {
        out.set_column(j, &linalg::sign_normalize(col.into_owned()));
    }
    out
}

/// Rows spanning `𝓜 = 𝓡⊥`.
///
/// Without an override the rows are orthonormal and deterministic. An override
/// must have exactly `m - dim 𝓡` linearly independent rows orthogonal to `𝓡`.
pub fn workload_matrix(rev_basis: &DMatrix<f64>, m: usize, override_m: Option<&DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let d = m - rev_basis.ncols();
    match override_m {
        None => Ok(linalg::orthogonal_complement(rev_basis, m).transpose()),
        Some(mo) => {
            if mo.nrows() != d || mo.ncols() != m {
                return Err(Error::InvalidInput(format!(
                    "workload matrix override is {}x{}, expected {d}x{m}",
                    mo.nrows(),
                    mo.ncols()
                )));
            }
            if d > 0 && rev_basis.ncols() > 0 {
                let inner = mo * rev_basis;
                let worst = max_abs(&inner);
                if worst > OVERRIDE_TOL {
                    let (i, j) = argmax_abs(&inner);
                    return Err(Error::InvalidInput(format!(
                        "workload matrix row {i} is not orthogonal to the reversible space: inner product with basis vector {j} is {:.6}",
                        inner[(i, j)]
                    )));
                }
            }
            if linalg::rank(mo) != d {
                return Err(Error::InvalidInput(
                    "workload matrix override rows are linearly dependent".into(),
                ));
            }
            Ok(mo.clone())
        }
    }
}

fn argmax_abs(a: &DMatrix<f64>) -> (usize, usize) {
    let mut best = (0, 0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if a[(i, j)].abs() > a[best].abs() {
                best = (i, j);
            }
        }
    }
    best
}

/// `K†`, the Moore-Penrose pseudo-inverse of `K`.
pub fn pseudo_inverse_k(k: &DMatrix<f64>) -> DMatrix<f64> {
    pinv(k)
}

/// `R†`: inverts `R` restricted to `N` on `𝓡`, and vanishes on `𝓜`.
pub fn pseudo_inverse_r(r: &DMatrix<f64>, n_basis: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, n) = (r.nrows(), r.ncols());
    if n_basis.ncols() == 0 {
        return DMatrix::zeros(n, rows);
    }
    let restricted = r * n_basis;
    let onto_rev = if m.nrows() == 0 {
        DMatrix::identity(rows, rows)
    } else {
        DMatrix::identity(rows, rows) - pinv(m) * m
    };
    n_basis * pinv(&restricted) * onto_rev
}

fn identity_scale(r: &DMatrix<f64>, k: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    1.0 + max_abs(r) + max_abs(k) + max_abs_vec(v)
}

/// `G = M R K†`, checked against `MR = GK`.
pub fn effort_matrix_g(
    m: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
    kdag: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let g = m * r * kdag;
    let residual = if m.nrows() == 0 {
        0.0
    } else {
        max_abs(&(m * r - &g * k))
    };
    let scale = (1.0 + max_abs(m)) * (1.0 + max_abs(r) + max_abs(k));
    if residual > IDENTITY_RTOL * scale {
        return Err(Error::Identity {
            what: "MR = GK".into(),
            residual,
        });
    }
    Ok(g)
}

/// Dual prices `(π, κ)` with `v' = π'R + κ'K`.
///
/// Only the `𝓡`-component of `π` is determined by `v`; the canonical choice is
/// `π' = v'R†`. An override is accepted when it agrees with `v` on `N`, i.e.
/// `v'y = π'Ry` for every basis vector `y` of `N`.
pub fn dual_prices(
    v: &DVector<f64>,
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
    rdag: &DMatrix<f64>,
    kdag: &DMatrix<f64>,
    n_basis: &DMatrix<f64>,
    pi_override: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = v.len();
    let (pi, kappa) = match pi_override {
        None => {
            let pi = rdag.transpose() * v;
            let proj = DMatrix::identity(n, n) - rdag * r;
            let kappa = kdag.transpose() * (proj.transpose() * v);
            (pi, kappa)
        }
        Some(pi) => {
            if pi.len() != r.nrows() {
                return Err(Error::Dimension(format!(
                    "pi override has {} entries, expected {}",
                    pi.len(),
                    r.nrows()
                )));
            }
            for (j, y) in n_basis.column_iter().enumerate() {
                let gap = v.dot(&y) - pi.dot(&(r * y));
                if gap.abs() > OVERRIDE_TOL * (1.0 + max_abs_vec(v)) {
                    return Err(Error::InvalidInput(format!(
                        "pi override is inconsistent on the reversible space: v'y - pi'Ry = {gap:.6} for null-space basis vector {j}"
                    )));
                }
            }
            let kappa = kdag.transpose() * (v - r.transpose() * pi);
            (pi.clone(), kappa)
        }
    };
    let residual = max_abs_vec(&(v - r.transpose() * &pi - k.transpose() * &kappa));
    if residual > IDENTITY_RTOL * identity_scale(r, k, v) {
        return Err(Error::Identity {
            what: "v' = pi'R + kappa'K".into(),
            residual,
        });
    }
    Ok((pi, kappa))
}

/// The unique `y` with `Ky = u`, `Ry = x`, given `Mx = Gu` and `u ∈ range K`.
pub fn recover_control(
    x: &DVector<f64>,
    u: &DVector<f64>,
    red: &WorkloadReduction,
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let scale = 1.0 + max_abs_vec(x) + max_abs_vec(u);
    if red.d > 0 {
        let gap = max_abs_vec(&(&red.m * x - &red.g * u));
        if gap > RECOVER_TOL * scale {
            return Err(Error::Identity {
                what: "compatibility Mx = Gu".into(),
                residual: gap,
            });
        }
    }
    let y_hat = &red.kdag * u;
    let range_gap = max_abs_vec(&(k * &y_hat - u));
    if range_gap > RECOVER_TOL * scale {
        return Err(Error::Identity {
            what: "u in range(K)".into(),
            residual: range_gap,
        });
    }
    let y = &y_hat + &red.rdag * (x - r * &y_hat);
    let ry = max_abs_vec(&(r * &y - x));
    if ry > RECOVER_TOL * scale {
        return Err(Error::Identity {
            what: "Ry = x".into(),
            residual: ry,
        });
    }
    Ok(y)
}

impl WorkloadReduction {
    /// Builds every piece of the reduction for `(R, K, v)`.
    pub fn new(
        r: &DMatrix<f64>,
        k: &DMatrix<f64>,
        v: &DVector<f64>,
        m_override: Option<&DMatrix<f64>>,
        pi_override: Option<&DVector<f64>>,
    ) -> Result<Self> {
        let m_dim = r.nrows();
        if k.ncols() != r.ncols() || v.len() != r.ncols() {
            return Err(Error::Dimension(format!(
                "R is {}x{}, K is {}x{}, v has {} entries",
                r.nrows(),
                r.ncols(),
                k.nrows(),
                k.ncols(),
                v.len()
            )));
        }
        let n_basis = null_space_basis(k);
        let rev_basis = reversible_basis(r, &n_basis);
        let m = workload_matrix(&rev_basis, m_dim, m_override)?;
        let d = m.nrows();
        let kdag = pseudo_inverse_k(k);
        let rdag = pseudo_inverse_r(r, &n_basis, &m);
        let g = effort_matrix_g(&m, r, k, &kdag)?;
        let (pi, kappa) = dual_prices(v, r, k, &rdag, &kdag, &n_basis, pi_override)?;
        let residuals = Residuals {
            mr_minus_gk: if d == 0 { 0.0 } else { max_abs(&(&m * r - &g * k)) },
            dual_identity: max_abs_vec(&(v - r.transpose() * &pi - k.transpose() * &kappa)),
            m_times_rev: if d == 0 || rev_basis.ncols() == 0 {
                0.0
            } else {
                max_abs(&(&m * &rev_basis))
            },
        };
        Ok(WorkloadReduction {
            n_basis,
            rev_basis,
            m,
            d,
            kdag,
            rdag,
            g,
            pi,
            kappa,
            residuals,
        })
    }

    pub fn recover(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
        r: &DMatrix<f64>,
        k: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        recover_control(x, u, self, r, k)
    }
}

fn workload_interval(m: &DMatrix<f64>, z: &Polytope) -> Result<(f64, f64)> {
    let row = m.row(0).transpose();
    let mut ends = [0.0; 2];
    for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
        let prob = LpProblem::new(&row * sign).with_ub(z.a(), z.b());
        match lp::solve_lp(&prob)? {
            LpOutcome::Optimal { value, .. } => ends[slot] = value * sign,
            other => {
                return Err(Error::Polytope(format!("workload interval LP returned {other:?}")));
            }
        }
    }
    Ok((ends[0], ends[1]))
}

/// Reduces a validated network to its workload formulation.
pub fn reduce_network(
    data: &NetworkData,
    m_override: Option<&DMatrix<f64>>,
    pi_override: Option<&DVector<f64>>,
) -> Result<(WorkloadReduction, ReducedNetworkData)> {
    data.ensure_valid()?;
    let red = WorkloadReduction::new(&data.r, &data.k, &data.v, m_override, pi_override)?;
    let reduced = reduced_data(data, &red)?;
    Ok((red, reduced))
}

pub(crate) fn reduced_data(data: &NetworkData, red: &WorkloadReduction) -> Result<ReducedNetworkData> {
    let m = &red.m;
    let w0 = m * &data.z0;
    let vartheta = m * &data.theta;
    let gamma = m * &data.sigma * m.transpose();
    if red.d > 0 && linalg::cholesky_lower(&gamma).is_none() {
        return Err(Error::NotPositiveDefinite("workload covariance M Sigma M'".into()));
    }
    let space = match red.d {
        0 => WorkloadSpace::Point,
        1 => {
            let (lo, hi) = workload_interval(m, &data.state_space)?;
            WorkloadSpace::Interval { lo, hi }
        }
        _ => WorkloadSpace::Preimage {
            m: m.clone(),
            z: data.state_space.clone(),
        },
    };
    Ok(ReducedNetworkData {
        d: red.d,
        p: data.p,
        w0,
        vartheta,
        gamma,
        g: red.g.clone(),
        space,
    })
}
