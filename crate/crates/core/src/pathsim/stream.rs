//! Fused single-pass evaluation of a lifted barrier policy.
//!
//! Nothing is stored per grid point: the workload motion, its regulation,
//! the extension to `X`, the selection `Z = ψ(W)` and both discounted cost
//! functionals advance together, one step at a time. The kernels are those
//! of the array versions, so both give the same numbers on the same path.

use nalgebra::{DMatrix, DVector};

use super::{path_rng, regulate_step, ExtensionPlan, Increments, StreamKind, TimeGrid};
use crate::effective_cost::Selection;
use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;
use crate::model::NetworkData;
use crate::reduction::{ReducedNetworkData, WorkloadReduction};

/// The discount factor is recomputed exactly this often.
const REANCHOR: usize = 4096;
/// Steps whose noise is drawn in one batch.
const BLOCK: usize = 1024;

/// `U = up·L1 + down·L2`.
#[derive(Debug, Clone)]
pub struct ControlMap {
    pub up: DVector<f64>,
    pub down: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkloadPolicy {
    /// Reflect at both ends of `[lo, hi]`.
    Barrier { lo: f64, hi: f64 },
    /// No control; fails once the workload leaves its state space.
    Free,
}

#[derive(Debug, Clone, Copy)]
pub struct StreamSettings {
    pub grid: TimeGrid,
    /// Noise is drawn at `dt / substeps` and summed, so grids that differ only
    /// in `substeps · dt`-consistent refinement share one Brownian path.
    pub substeps: usize,
    /// Also rebuild `Y` at every step and track the worst identity residual.
    pub check_identities: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamedPath {
    pub holding: f64,
    pub control: f64,
    /// `ζ(T)`.
    pub zeta: f64,
    pub holding_check: f64,
    pub control_check: f64,
    /// `ζ̌(T)`.
    pub zeta_check: f64,
    /// `α ∫ e^{-αs} π'X(s) ds`, left Riemann.
    pub pi_x_integral: f64,
    /// `e^{-αT} π'(Z(T) - X(T))`, the limit of the equivalence residual.
    pub boundary: f64,
    pub l1_discounted: f64,
    pub l2_discounted: f64,
    pub final_w: f64,
    pub max_identity_residual: f64,
}

impl StreamedPath {
    /// `ζ(T) + α∫e^{-αs}π'X ds - ζ̌(T)`.
    pub fn equivalence_residual(&self) -> f64 {
        self.zeta + self.pi_x_integral - self.zeta_check
    }

    /// The residual with its `Δt → 0` limit removed.
    pub fn discretization_residual(&self) -> f64 {
        self.equivalence_residual() - self.boundary
    }
}

/// Largest state dimension the fused engine is instantiated for.
pub const MAX_STREAM_DIM: usize = 8;

/// Per-step coefficients for a state of dimension `M` and a scalar workload.
struct Kernel<const M: usize> {
    q: [[f64; M]; M],
    c: [f64; M],
    c0: f64,
    pi: [f64; M],
    /// `v'Y = vy_l1·L1 + vy_l2·L2 + vy_zx'(Z - X)`.
    vy_l1: f64,
    vy_l2: f64,
    vy_zx: [f64; M],
    kappa_l1: f64,
    kappa_l2: f64,
    chi_drift: f64,
    chi_scale: f64,
    /// `ΔX = t1·Δχ + t2·Δχ̃` with `Δχ̃ = coupling·Δχ + aux_drift + Ã·ΣΔB̃`;
    /// only the first `M - 1` auxiliary coordinates are used.
    t1: [f64; M],
    t2: [[f64; M]; M],
    coupling: [f64; M],
    aux_drift: [f64; M],
    a_tilde: [[f64; M]; M],
}

impl<const M: usize> Kernel<M> {
    fn new(
        data: &NetworkData,
        red: &WorkloadReduction,
        reduced: &ReducedNetworkData,
        plan: &ExtensionPlan,
        map: &ControlMap,
        dt: f64,
        substeps: usize,
    ) -> Result<Self> {
        let gamma_chol =
            cholesky_lower(&reduced.gamma).ok_or_else(|| Error::NotPositiveDefinite("M Sigma M'".into()))?;
        let rk = &data.r * &red.kdag;
        let a_u = &red.kdag - &red.rdag * &rk;
        let vy_u = a_u.transpose() * &data.v;
        let vy_zx = red.rdag.transpose() * &data.v;
        let fine_scale = (dt / substeps as f64).sqrt();
        let chi_drift = reduced.vartheta[0] * dt;
        let a = M - 1;
        let vec = |f: &dyn Fn(usize) -> f64| -> [f64; M] { std::array::from_fn(f) };
        let coupling = vec(&|i| if i < a { plan.coupling[(i, 0)] } else { 0.0 });
        Ok(Kernel {
            q: std::array::from_fn(|i| std::array::from_fn(|j| data.h.q[(i, j)])),
            c: vec(&|i| data.h.c[i]),
            c0: data.h.c0,
            pi: vec(&|i| red.pi[i]),
            vy_l1: vy_u.dot(&map.up),
            vy_l2: vy_u.dot(&map.down),
            vy_zx: vec(&|i| vy_zx[i]),
            kappa_l1: red.kappa.dot(&map.up),
            kappa_l2: red.kappa.dot(&map.down),
            chi_drift,
            chi_scale: gamma_chol[(0, 0)] * fine_scale,
            t1: vec(&|i| plan.t1[(i, 0)]),
            t2: std::array::from_fn(|i| std::array::from_fn(|j| if j < a { plan.t2[(i, j)] } else { 0.0 })),
            aux_drift: vec(&|i| {
                if i < a {
                    plan.vartheta_tilde[i] * dt - coupling[i] * chi_drift
                } else {
                    0.0
                }
            }),
            coupling,
            a_tilde: std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    if i < a && j < a {
                        plan.a_tilde[(i, j)] * fine_scale
                    } else {
                        0.0
                    }
                })
            }),
        })
    }

    #[inline(always)]
    fn h(&self, z: &[f64; M]) -> f64 {
        let mut s = self.c0;
        for i in 0..M {
            let mut qi = self.c[i];
            for j in 0..M {
                qi += self.q[i][j] * z[j];
            }
            s += z[i] * qi;
        }
        s
    }

    #[inline(always)]
    fn value(&self, l1: f64, l2: f64, z: &[f64; M], x: &[f64; M]) -> f64 {
        let mut s = self.vy_l1 * l1 + self.vy_l2 * l2;
        for i in 0..M {
            s += self.vy_zx[i] * (z[i] - x[i]);
        }
        s
    }

    #[inline(always)]
    fn pi_dot(&self, x: &[f64; M]) -> f64 {
        let mut s = 0.0;
        for i in 0..M {
            s += self.pi[i] * x[i];
        }
        s
    }
}

#[allow(clippy::too_many_arguments)]
fn identity_residual(
    data: &NetworkData,
    red: &WorkloadReduction,
    map: &ControlMap,
    l1: f64,
    l2: f64,
    w: f64,
    chi: f64,
    z: &[f64],
    x: &[f64],
) -> f64 {
    let u = &map.up * l1 + &map.down * l2;
    let zv = DVector::from_column_slice(z);
    let xv = DVector::from_column_slice(x);
    let y = &red.kdag * &u + &red.rdag * (&zv - &xv - &data.r * &red.kdag * &u);
    let r1 = (&zv - &xv - &data.r * &y).amax();
    let r2 = (&u - &data.k * &y).amax();
    let lhs = data.v.dot(&y);
    let r3 = (lhs - red.pi.dot(&(&zv - &xv)) - red.kappa.dot(&u)).abs() / (1.0 + lhs.abs());
    let r4 = ((&red.m * &zv)[0] - w).abs();
    let r5 = ((&red.m * &xv)[0] - chi).abs();
    r1.max(r2).max(r3).max(r4).max(r5)
}

/// Runs one path of a one-dimensional workload policy lifted to the full
/// network and returns both discounted costs. Needs `d = 1` and
/// `m <= MAX_STREAM_DIM`.
#[allow(clippy::too_many_arguments)]
pub fn stream_lifted_path<S: Selection + ?Sized>(
    data: &NetworkData,
    red: &WorkloadReduction,
    reduced: &ReducedNetworkData,
    plan: &ExtensionPlan,
    sel: &S,
    map: &ControlMap,
    policy: WorkloadPolicy,
    settings: &StreamSettings,
    seed: u64,
    path_index: u64,
) -> Result<StreamedPath> {
    if red.d != 1 || plan.d != 1 {
        return Err(Error::Dimension(
            "the streaming engine handles a scalar workload only".into(),
        ));
    }
    let args = StreamArgs {
        data,
        red,
        reduced,
        plan,
        map,
        policy,
        settings,
        seed,
        path_index,
    };
    macro_rules! dispatch {
        ($($n:literal),*) => {
            match data.m {
                $($n => run::<$n, S>(&args, sel),)*
                m => Err(Error::Dimension(format!(
                    "the streaming engine supports up to {MAX_STREAM_DIM} state dimensions, got {m}"
                ))),
            }
        };
    }
    dispatch!(1, 2, 3, 4, 5, 6, 7, 8)
}

struct StreamArgs<'a> {
    data: &'a NetworkData,
    red: &'a WorkloadReduction,
    reduced: &'a ReducedNetworkData,
    plan: &'a ExtensionPlan,
    map: &'a ControlMap,
    policy: WorkloadPolicy,
    settings: &'a StreamSettings,
    seed: u64,
    path_index: u64,
}

fn run<const M: usize, S: Selection + ?Sized>(args: &StreamArgs, sel: &S) -> Result<StreamedPath> {
    let StreamArgs {
        data,
        red,
        reduced,
        plan,
        map,
        policy,
        settings,
        seed,
        path_index,
    } = *args;
    let (lo, hi) = match policy {
        WorkloadPolicy::Barrier { lo, hi } => (lo, hi),
        WorkloadPolicy::Free => (f64::NEG_INFINITY, f64::INFINITY),
    };
    let a = M - 1;
    let grid = settings.grid;
    let (dt, alpha) = (grid.dt, data.alpha);
    let sub = settings.substeps.max(1);
    let kern = Kernel::<M>::new(data, red, reduced, plan, map, dt, sub)?;
    let mut chi_noise = Increments::new(
        &[0.0],
        &DMatrix::identity(1, 1),
        dt,
        1,
        path_rng(seed, path_index, StreamKind::Workload),
    );
    let mut aux_noise = Increments::new(
        &vec![0.0; a],
        &DMatrix::identity(a, a),
        dt,
        1,
        path_rng(seed, path_index, StreamKind::Auxiliary),
    );

    let mut chi = reduced.w0[0];
    let mut w = chi.clamp(lo, hi);
    if w != chi {
        return Err(Error::InvalidInput(format!(
            "initial workload {chi} outside [{lo}, {hi}]"
        )));
    }
    let (mut l1, mut l2) = (0.0f64, 0.0f64);
    let x0 = plan.initial_state(&[chi]);
    let mut x: [f64; M] = std::array::from_fn(|i| x0[i]);
    let mut z = [0.0; M];
    let mut gcheck = sel.select_into(&[w], &mut z).map_err(|e| path_err(0, e))?;
    let mut out = StreamedPath::default();
    let mut f_prev = kern.value(l1, l2, &z, &x);
    let mut fk_prev = 0.0;
    out.control = f_prev;
    if settings.check_identities {
        out.max_identity_residual = identity_residual(data, red, map, l1, l2, w, chi, &z, &x);
    }

    let q = (-alpha * dt).exp();
    let mut disc = 1.0;
    let mut chi_buf = vec![0.0; BLOCK * sub];
    let mut aux_buf = vec![0.0; BLOCK * sub * a];
    let mut k = 0;
    while k < grid.steps {
        let block = BLOCK.min(grid.steps - k);
        chi_noise.fill_standard(&mut chi_buf[..block * sub]);
        aux_noise.fill_standard(&mut aux_buf[..block * sub * a]);
        for s in 0..block {
            out.holding += disc * kern.h(&z);
            out.holding_check += disc * gcheck;
            out.pi_x_integral += disc * kern.pi_dot(&x);

            let xi: f64 = chi_buf[s * sub..(s + 1) * sub].iter().sum();
            let dchi = kern.chi_drift + kern.chi_scale * xi;
            let mut e = [0.0; M];
            for f in 0..sub {
                let base = (s * sub + f) * a;
                for j in 0..M - 1 {
                    e[j] += aux_buf[base + j];
                }
            }
            let mut dct = [0.0; M];
            for i in 0..M - 1 {
                let mut v = kern.aux_drift[i] + kern.coupling[i] * dchi;
                for j in 0..=i {
                    v += kern.a_tilde[i][j] * e[j];
                }
                dct[i] = v;
            }
            let (w_next, d1, d2) = regulate_step(w, dchi, lo, hi);
            w = w_next;
            l1 += d1;
            l2 += d2;
            chi += dchi;
            for i in 0..M {
                let mut v = kern.t1[i] * dchi;
                for j in 0..M - 1 {
                    v += kern.t2[i][j] * dct[j];
                }
                x[i] += v;
            }
            k += 1;
            gcheck = sel.select_into(&[w], &mut z).map_err(|e| path_err(k, e))?;

            disc = if k % REANCHOR == 0 {
                (-alpha * dt * k as f64).exp()
            } else {
                disc * q
            };
            let f = kern.value(l1, l2, &z, &x);
            out.control += disc * (f - f_prev);
            f_prev = f;
            let fk = kern.kappa_l1 * l1 + kern.kappa_l2 * l2;
            out.control_check += disc * (fk - fk_prev);
            fk_prev = fk;
            out.l1_discounted += disc * d1;
            out.l2_discounted += disc * d2;
            if settings.check_identities {
                let r = identity_residual(data, red, map, l1, l2, w, chi, &z, &x);
                out.max_identity_residual = out.max_identity_residual.max(r);
            }
        }
    }
    out.holding *= dt;
    out.holding_check *= dt;
    out.pi_x_integral *= alpha * dt;
    out.zeta = out.holding + out.control;
    out.zeta_check = out.holding_check + out.control_check;
    out.boundary = disc * (kern.pi_dot(&z) - kern.pi_dot(&x));
    out.final_w = w;
    Ok(out)
}

fn path_err(step: usize, e: Error) -> Error {
    Error::Path {
        step,
        what: format!("workload left its state space: {e}"),
        residual: f64::NAN,
    }
}
