//! Lifting a workload control `(W, U)` to a state control `(Z, Y)`.

use nalgebra::{DMatrix, DVector};

use super::{extend_workload_bm, ExtensionPlan, Path, TimeGrid};
use crate::effective_cost::Selection;
use crate::error::{Error, Result};
use crate::model::NetworkData;
use crate::reduction::WorkloadReduction;

/// Workload-side residuals above this reject the input of [`lift_control`].
pub const PRECONDITION_TOL: f64 = 1e-6;

/// All processes of one simulated path on a common grid.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub seed: u64,
    pub path_index: u64,
    pub chi: Path,
    pub w: Path,
    pub u: Path,
    pub x: Path,
    pub z: Path,
    pub y: Path,
    /// Barrier pushes at the lower and upper ends, when `d = 1`.
    pub l1: Option<Vec<f64>>,
    pub l2: Option<Vec<f64>>,
}

/// Worst residuals over the grid; `worst_step` is where the largest occurs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IdentityResiduals {
    pub mz_minus_w: f64,
    pub mx_minus_chi: f64,
    pub z_minus_x_minus_ry: f64,
    pub u_minus_ky: f64,
    /// `v'Y - π'(Z - X) - κ'U`.
    pub value_identity: f64,
    pub z_outside: f64,
    pub u_decrease: f64,
    pub worst_step: usize,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.mz_minus_w,
            self.mx_minus_chi,
            self.z_minus_x_minus_ry,
            self.u_minus_ky,
            self.value_identity,
            self.z_outside,
            self.u_decrease,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn gap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

impl PathBundle {
    pub fn identity_residuals(&self, data: &NetworkData, red: &WorkloadReduction) -> IdentityResiduals {
        let mut out = IdentityResiduals::default();
        let mut worst = 0.0;
        for k in 0..self.grid.len() {
            let (z, x, y, u) = (self.z.vector(k), self.x.vector(k), self.y.vector(k), self.u.vector(k));
            let mut row = IdentityResiduals::default();
            if red.d > 0 {
                row.mz_minus_w = gap(&(&red.m * &z), &self.w.vector(k));
                row.mx_minus_chi = gap(&(&red.m * &x), &self.chi.vector(k));
            }
            row.z_minus_x_minus_ry = gap(&z, &(&x + &data.r * &y));
            row.u_minus_ky = gap(&u, &(&data.k * &y));
            let lhs = data.v.dot(&y);
            let rhs = red.pi.dot(&(&z - &x)) + red.kappa.dot(&u);
            row.value_identity = (lhs - rhs).abs() / (1.0 + lhs.abs());
            row.z_outside = data.state_space.violation(z.as_slice()).max(0.0);
            row.u_decrease = if k == 0 {
                u.iter().fold(0.0f64, |m, v| m.max(-v))
            } else {
                let prev = self.u.at(k - 1);
                u.iter().zip(prev).fold(0.0f64, |m, (a, b)| m.max(b - a))
            };
            let r = row.max();
            if r > worst {
                worst = r;
                out.worst_step = k;
            }
            out.mz_minus_w = out.mz_minus_w.max(row.mz_minus_w);
            out.mx_minus_chi = out.mx_minus_chi.max(row.mx_minus_chi);
            out.z_minus_x_minus_ry = out.z_minus_x_minus_ry.max(row.z_minus_x_minus_ry);
            out.u_minus_ky = out.u_minus_ky.max(row.u_minus_ky);
            out.value_identity = out.value_identity.max(row.value_identity);
            out.z_outside = out.z_outside.max(row.z_outside);
            out.u_decrease = out.u_decrease.max(row.u_decrease);
        }
        out
    }
}

fn check_workload_input(u: &Path, w: &Path, chi: &Path, g: &DMatrix<f64>) -> Result<()> {
    let mut worst = (0usize, 0.0f64, "");
    for k in 0..w.points() {
        let gu = g * u.vector(k);
        let r = (chi.vector(k) + gu - w.vector(k)).amax();
        if r > worst.1 {
            worst = (k, r, "W = chi + GU");
        }
        let dec = if k == 0 {
            u.at(0).iter().fold(0.0f64, |m, v| m.max(-v))
        } else {
            u.at(k).iter().zip(u.at(k - 1)).fold(0.0f64, |m, (a, b)| m.max(b - a))
        };
        if dec > worst.1 {
            worst = (k, dec, "U nondecreasing from U(0) >= 0");
        }
    }
    if worst.1 > PRECONDITION_TOL {
        return Err(Error::Path {
            step: worst.0,
            what: worst.2.into(),
            residual: worst.1,
        });
    }
    Ok(())
}

/// Builds `Z = ψ(W)`, extends `χ` to `X`, and sets
/// `Y = K†U + R†(Z - X - RK†U)`.
#[allow(clippy::too_many_arguments)]
pub fn lift_control<S: Selection + ?Sized>(
    u: Path,
    w: Path,
    chi: Path,
    data: &NetworkData,
    red: &WorkloadReduction,
    plan: &ExtensionPlan,
    sel: &S,
    grid: &TimeGrid,
    seed: u64,
    path_index: u64,
) -> Result<PathBundle> {
    let points = grid.len();
    if u.dim != data.p
        || w.dim != red.d
        || chi.dim != red.d
        || [u.points(), w.points(), chi.points()].iter().any(|&n| n != points)
    {
        return Err(Error::Dimension(
            "lift inputs do not match the grid and dimensions".into(),
        ));
    }
    check_workload_input(&u, &w, &chi, &red.g)?;
    let x = extend_workload_bm(&chi, plan, grid, seed, path_index)?;
    let mut z = Path::zeros(data.m, points);
    for k in 0..points {
        sel.select_into(w.at(k), z.at_mut(k)).map_err(|e| Error::Path {
            step: k,
            what: format!("selection at W = {:?}: {e}", w.at(k)),
            residual: f64::NAN,
        })?;
    }
    let rk = &data.r * &red.kdag;
    let mut y = Path::zeros(data.n, points);
    for k in 0..points {
        let uk = u.vector(k);
        let disp = z.vector(k) - x.vector(k) - &rk * &uk;
        let yk = &red.kdag * &uk + &red.rdag * disp;
        y.at_mut(k).copy_from_slice(yk.as_slice());
    }
    Ok(PathBundle {
        grid: *grid,
        seed,
        path_index,
        chi,
        w,
        u,
        x,
        z,
        y,
        l1: None,
        l2: None,
    })
}
