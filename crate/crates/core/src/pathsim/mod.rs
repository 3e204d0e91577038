//! Brownian path simulation, the workload-to-state extension, the two-sided
//! regulator, control lifting and discounted cost functionals.
//!
//! Every path draws its noise from ChaCha streams keyed by
//! `(seed, path_index, kind)`, so any two runs that share a seed see
//! identical noise path by path.

mod ball;
mod cost;
mod lift;
mod regulator;
mod stream;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub use ball::{baseline_ball_control, BallReport};
pub use cost::{
    auto_horizon, control_tail_bound, cost_bcp, cost_rbcp, discounted_by_parts, discounted_stieltjes, offset_i,
    CostBreakdown,
};
pub use lift::{lift_control, IdentityResiduals, PathBundle};
pub use regulator::{regulate_step, two_sided_regulator, Regulated};
pub use stream::{stream_lifted_path, ControlMap, StreamSettings, StreamedPath, WorkloadPolicy};

use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;

/// Largest `αΔt` accepted by [`TimeGrid::for_discount`].
pub const RESOLUTION: f64 = 0.01;

/// The uniform grid `t_k = kΔt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0) || !(horizon > 0.0) || !dt.is_finite() || !horizon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "grid needs dt > 0 and T > 0, got dt = {dt}, T = {horizon}"
            )));
        }
        let steps = (horizon / dt).round();
        if (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "T = {horizon} is not a multiple of dt = {dt}"
            )));
        }
        Ok(TimeGrid {
            dt,
            steps: steps as usize,
        })
    }

    /// As [`TimeGrid::new`], also requiring `dt <= 1 / (100 α)`.
    pub fn for_discount(dt: f64, horizon: f64, alpha: f64) -> Result<Self> {
        if alpha * dt > RESOLUTION * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "dt = {dt} is coarser than 1/(100 alpha) = {}",
                RESOLUTION / alpha
            )));
        }
        Self::new(dt, horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A `dim`-dimensional path stored row by row, one row per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Path {
    pub fn zeros(dim: usize, points: usize) -> Self {
        Path {
            dim,
            data: vec![0.0; dim * points],
        }
    }

    pub fn from_scalars(values: Vec<f64>) -> Self {
        Path { dim: 1, data: values }
    }

    pub fn points(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn at(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn vector(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.at(k))
    }

    /// Component `i` along the whole path.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.data.iter().skip(i).step_by(self.dim.max(1)).copied().collect()
    }
}

/// Independent noise families drawn for one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// The workload Brownian motion, or any path simulated directly.
    Workload = 0,
    /// The auxiliary motion used to extend a workload path to the full state.
    Auxiliary = 1,
    /// Full-dimensional state noise when there is no workload to extend.
    Full = 2,
}

pub fn path_rng(seed: u64, path_index: u64, kind: StreamKind) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((path_index << 2) | kind as u64);
    rng
}

/// Gaussian increments `drift·Δt + L·√Δt·ξ` with `L L' = cov`.
///
/// With `substeps = s > 1` each increment sums `s` fine draws at `Δt/s`, so
/// paths at `Δt` and at `Δt/s` are built from the same fine noise.
pub(crate) struct Increments {
    rng: ChaCha8Rng,
    chol: Vec<f64>,
    drift_dt: Vec<f64>,
    scale: f64,
    substeps: usize,
    xi: Vec<f64>,
}

impl Increments {
    pub(crate) fn new(drift: &[f64], chol: &DMatrix<f64>, dt: f64, substeps: usize, rng: ChaCha8Rng) -> Self {
        let dim = drift.len();
        let substeps = substeps.max(1);
        Increments {
            rng,
            chol: (0..dim * dim).map(|i| chol[(i / dim, i % dim)]).collect(),
            drift_dt: drift.iter().map(|d| d * dt).collect(),
            scale: (dt / substeps as f64).sqrt(),
            substeps,
            xi: vec![0.0; dim],
        }
    }

    /// Fills `buf` with raw standard normals from this stream.
    pub(crate) fn fill_standard(&mut self, buf: &mut [f64]) {
        for x in buf.iter_mut() {
            *x = StandardNormal.sample(&mut self.rng);
        }
    }

    #[inline]
    pub(crate) fn next_into(&mut self, out: &mut [f64]) {
        let dim = self.xi.len();
        self.xi.iter_mut().for_each(|x| *x = 0.0);
        for _ in 0..self.substeps {
            for x in self.xi.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut self.rng);
                *x += e;
            }
        }
        for i in 0..dim {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.chol[i * dim + j] * self.xi[j];
            }
            out[i] = self.drift_dt[i] + self.scale * s;
        }
    }
}

fn chol_or_err(cov: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    cholesky_lower(cov).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// A Brownian motion with the given drift and covariance from `start`.
pub fn simulate_bm(
    start: &[f64],
    drift: &[f64],
    cov: &DMatrix<f64>,
    grid: &TimeGrid,
    seed: u64,
    path_index: u64,
) -> Result<Path> {
    simulate_bm_kind(
        start,
        drift,
        cov,
        grid,
        path_rng(seed, path_index, StreamKind::Workload),
    )
}

pub(crate) fn simulate_bm_kind(
    start: &[f64],
    drift: &[f64],
    cov: &DMatrix<f64>,
    grid: &TimeGrid,
    rng: ChaCha8Rng,
) -> Result<Path> {
    let dim = start.len();
    if drift.len() != dim || cov.shape() != (dim, dim) {
        return Err(Error::Dimension(format!(
            "start has {dim} entries, drift {}, covariance {}x{}",
            drift.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let chol = chol_or_err(cov, "Brownian covariance")?;
    let mut inc = Increments::new(drift, &chol, grid.dt, 1, rng);
    let mut path = Path::zeros(dim, grid.len());
    path.at_mut(0).copy_from_slice(start);
    let mut dx = vec![0.0; dim];
    for k in 0..grid.steps {
        inc.next_into(&mut dx);
        let (prev, next) = path.data.split_at_mut((k + 1) * dim);
        let prev = &prev[k * dim..];
        for i in 0..dim {
            next[i] = prev[i] + dx[i];
        }
    }
    Ok(path)
}

/// The linear maps that extend a workload motion `χ` to a state motion `X`
/// with `MX = χ` and statistics `(θ, Σ)` from `z°`.
#[derive(Debug, Clone)]
pub struct ExtensionPlan {
    pub d: usize,
    pub m: usize,
    /// `X = t1·χ + t2·χ̃`, i.e. the two column blocks of `(M; N)^{-1}`.
    pub t1: DMatrix<f64>,
    pub t2: DMatrix<f64>,
    /// `Π'Γ^{-1}`.
    pub coupling: DMatrix<f64>,
    /// Cholesky factor of the Schur complement `Γ̃ - Π'Γ^{-1}Π`.
    pub a_tilde: DMatrix<f64>,
    pub vartheta: DVector<f64>,
    pub vartheta_tilde: DVector<f64>,
    pub w0_tilde: DVector<f64>,
    pub z0: DVector<f64>,
    pub theta: DVector<f64>,
    pub sigma_chol: DMatrix<f64>,
}

impl ExtensionPlan {
    pub fn new(
        m_mat: &DMatrix<f64>,
        sigma: &DMatrix<f64>,
        theta: &DVector<f64>,
        z0: &DVector<f64>,
        rev_basis: &DMatrix<f64>,
    ) -> Result<Self> {
        let (d, m) = m_mat.shape();
        let sigma_chol = chol_or_err(sigma, "Sigma")?;
        let n_rows = rev_basis.transpose();
        if d + n_rows.nrows() != m {
            return Err(Error::Dimension(format!(
                "M has {d} rows and the reversible basis {} columns; they must add up to {m}",
                n_rows.nrows()
            )));
        }
        let mn = DMatrix::from_fn(m, m, |i, j| if i < d { m_mat[(i, j)] } else { n_rows[(i - d, j)] });
        let inv = mn
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Dimension("(M; N) is singular".into()))?;
        let t1 = inv.columns(0, d).into_owned();
        let t2 = inv.columns(d, m - d).into_owned();
        let gamma = m_mat * sigma * m_mat.transpose();
        let pi_block = m_mat * sigma * n_rows.transpose();
        let gamma_tilde = &n_rows * sigma * n_rows.transpose();
        let coupling = if d == 0 {
            DMatrix::zeros(m, 0)
        } else {
            let gamma_inv = gamma
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NotPositiveDefinite("M Sigma M'".into()))?;
            pi_block.transpose() * gamma_inv
        };
        let schur = &gamma_tilde - &coupling * &pi_block;
        let schur = (&schur + schur.transpose()) * 0.5;
        let a_tilde = chol_or_err(&schur, "Schur complement of M Sigma M'")?;
        Ok(ExtensionPlan {
            d,
            m,
            t1,
            t2,
            coupling,
            a_tilde,
            vartheta: m_mat * theta,
            vartheta_tilde: &n_rows * theta,
            w0_tilde: &n_rows * z0,
            z0: z0.clone(),
            theta: theta.clone(),
            sigma_chol,
        })
    }

    pub fn aux_dim(&self) -> usize {
        self.m - self.d
    }

    /// `X(0)` given `χ(0)`.
    pub fn initial_state(&self, chi0: &[f64]) -> DVector<f64> {
        if self.d == 0 {
            return self.z0.clone();
        }
        &self.t1 * DVector::from_column_slice(chi0) + &self.t2 * &self.w0_tilde
    }

    /// `Δχ̃ = Π'Γ^{-1}(Δχ - ϑΔt) + ÃΔB̃ + ϑ̃Δt` with `aux_noise = ΔB̃`.
    pub(crate) fn aux_increment(&self, dchi: &[f64], aux_noise: &[f64], dt: f64, out: &mut [f64]) {
        let (d, a) = (self.d, self.aux_dim());
        for i in 0..a {
            let mut s = self.vartheta_tilde[i] * dt;
            for j in 0..d {
                s += self.coupling[(i, j)] * (dchi[j] - self.vartheta[j] * dt);
            }
            for j in 0..=i {
                s += self.a_tilde[(i, j)] * aux_noise[j];
            }
            out[i] = s;
        }
    }
}

/// Extends a workload path `χ` to a state path `X` with `MX = χ`.
///
/// For `d = 0` the state motion is simulated outright; for `d = m` it is
/// `M^{-1}χ` with no extra noise.
pub fn extend_workload_bm(
    chi: &Path,
    plan: &ExtensionPlan,
    grid: &TimeGrid,
    seed: u64,
    path_index: u64,
) -> Result<Path> {
    let (d, m) = (plan.d, plan.m);
    if d == 0 {
        let z0: Vec<f64> = plan.z0.iter().copied().collect();
        let theta: Vec<f64> = plan.theta.iter().copied().collect();
        let cov = &plan.sigma_chol * plan.sigma_chol.transpose();
        return simulate_bm_kind(&z0, &theta, &cov, grid, path_rng(seed, path_index, StreamKind::Full));
    }
    if chi.dim != d || chi.points() != grid.len() {
        return Err(Error::Dimension(format!(
            "workload path has dimension {} and {} points; expected {d} and {}",
            chi.dim,
            chi.points(),
            grid.len()
        )));
    }
    let a = plan.aux_dim();
    let mut aux = Increments::new(
        &vec![0.0; a],
        &DMatrix::identity(a, a),
        grid.dt,
        1,
        path_rng(seed, path_index, StreamKind::Auxiliary),
    );
    let mut x = Path::zeros(m, grid.len());
    let mut chi_tilde = plan.w0_tilde.as_slice().to_vec();
    let (mut db, mut dct, mut dchi) = (vec![0.0; a], vec![0.0; a], vec![0.0; d]);
    for k in 0..grid.len() {
        if k > 0 {
            for j in 0..d {
                dchi[j] = chi.at(k)[j] - chi.at(k - 1)[j];
            }
            aux.next_into(&mut db);
            plan.aux_increment(&dchi, &db, grid.dt, &mut dct);
            for i in 0..a {
                chi_tilde[i] += dct[i];
            }
        }
        let row = x.at_mut(k);
        let c = chi.at(k);
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..d {
                s += plan.t1[(i, j)] * c[j];
            }
            for j in 0..a {
                s += plan.t2[(i, j)] * chi_tilde[j];
            }
            row[i] = s;
        }
    }
    Ok(x)
}

/// Sample mean and standard error of the mean; the error is zero for one sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NetworkData, TwoServerParams};
    use crate::reduction::reduce_network;

    #[test]
    fn grid_rejects_non_multiples_and_coarse_steps() {
        assert_eq!(TimeGrid::new(0.25, 1.0).unwrap().steps, 4);
        assert!(TimeGrid::new(0.3, 1.0).is_err());
        assert!(TimeGrid::for_discount(0.2, 1.0, 0.1).is_err());
        assert!(TimeGrid::for_discount(0.1, 1.0, 0.1).is_ok());
    }

    #[test]
    fn same_seed_same_path() {
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        let cov = DMatrix::identity(2, 2);
        let a = simulate_bm(&[0.0, 1.0], &[0.0, 0.0], &cov, &grid, 7, 3).unwrap();
        let b = simulate_bm(&[0.0, 1.0], &[0.0, 0.0], &cov, &grid, 7, 3).unwrap();
        let c = simulate_bm(&[0.0, 1.0], &[0.0, 0.0], &cov, &grid, 7, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.at(0), &[0.0, 1.0]);
    }

    #[test]
    fn deterministic_drift_with_tiny_noise() {
        let grid = TimeGrid::new(0.001, 1.0).unwrap();
        let cov = DMatrix::from_element(1, 1, 1e-12);
        let p = simulate_bm(&[3.0], &[2.0], &cov, &grid, 1, 0).unwrap();
        assert!((p.at(grid.steps)[0] - 5.0).abs() < 1e-4);
    }

    #[test]
    fn extension_reproduces_workload() {
        let data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        let m = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let (red, reduced) = reduce_network(&data, Some(&m), None).unwrap();
        let plan = ExtensionPlan::new(&red.m, &data.sigma, &data.theta, &data.z0, &red.rev_basis).unwrap();
        let grid = TimeGrid::new(0.01, 2.0).unwrap();
        let chi = simulate_bm(
            reduced.w0.as_slice(),
            reduced.vartheta.as_slice(),
            &reduced.gamma,
            &grid,
            11,
            0,
        )
        .unwrap();
        let x = extend_workload_bm(&chi, &plan, &grid, 11, 0).unwrap();
        for k in 0..grid.len() {
            let mx = 2.0 * x.at(k)[0] + x.at(k)[1];
            assert!((mx - chi.at(k)[0]).abs() < 1e-10);
        }
        assert!(x.at(0).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn full_rank_workload_needs_no_auxiliary_noise() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let sigma = DMatrix::identity(2, 2);
        let plan = ExtensionPlan::new(
            &m,
            &sigma,
            &DVector::zeros(2),
            &DVector::zeros(2),
            &DMatrix::zeros(2, 0),
        )
        .unwrap();
        assert_eq!(plan.aux_dim(), 0);
        let grid = TimeGrid::new(0.1, 1.0).unwrap();
        let gamma = &m * &sigma * m.transpose();
        let chi = simulate_bm(&[0.0, 0.0], &[0.0, 0.0], &gamma, &grid, 2, 0).unwrap();
        let x = extend_workload_bm(&chi, &plan, &grid, 2, 0).unwrap();
        let minv = m.try_inverse().unwrap();
        for k in 0..grid.len() {
            assert!((x.vector(k) - &minv * chi.vector(k)).amax() < 1e-12);
        }
    }
}
