//! Two-barrier policies for a one-dimensional workload.
//!
//! The control modes are collapsed to an upward push `L1` and a downward push
//! `L2`, each routed to the cheapest mode per unit of workload. The workload
//! is reflected at `lo` and at a barrier `b*`, which is chosen by a
//! golden-section search on common random numbers.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::effective_cost::{EffectiveCost, Selection};
use crate::error::{Error, Result};
use crate::model::{NetworkData, TwoServerParams};
use crate::pathsim::{
    lift_control, mean_stderr, offset_i, path_rng, regulate_step, simulate_bm, stream_lifted_path, two_sided_regulator,
    ControlMap, ExtensionPlan, Path, PathBundle, StreamKind, StreamSettings, StreamedPath, TimeGrid, WorkloadPolicy,
};
use crate::reduction::{reduce_network, ReducedNetworkData, WorkloadReduction};

/// Relative tolerance for treating two cost ratios as tied.
const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReduction {
    /// Modes with `G_k > 0` minimizing `κ_k / G_k`, ascending.
    pub up_modes: Vec<usize>,
    /// Modes with `G_k < 0` minimizing `κ_k / |G_k|`, ascending.
    pub down_modes: Vec<usize>,
    pub l1: f64,
    pub l2: f64,
    /// `U` per unit of `L1`; all of it goes to the first up mode.
    pub up_map: DVector<f64>,
    /// `U` per unit of `L2`; all of it goes to the first down mode.
    pub down_map: DVector<f64>,
}

impl ModeReduction {
    pub fn control_map(&self) -> ControlMap {
        ControlMap {
            up: self.up_map.clone(),
            down: self.down_map.clone(),
        }
    }

    /// `U = up_map·L1 + down_map·L2`.
    pub fn control(&self, l1: f64, l2: f64) -> DVector<f64> {
        &self.up_map * l1 + &self.down_map * l2
    }
}

fn cheapest(g: &[f64], kappa: &[f64], sign: f64) -> Option<(Vec<usize>, f64)> {
    let ratios: Vec<(usize, f64)> = g
        .iter()
        .enumerate()
        .filter(|(_, gk)| **gk * sign > 0.0)
        .map(|(k, gk)| (k, kappa[k] / gk.abs()))
        .collect();
    let best = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    // Round-off in κ must not turn a free mode into a slightly profitable one.
    let best = if best.abs() <= TIE_RTOL { 0.0 } else { best };
    let modes = ratios
        .iter()
        .filter(|r| r.1 - best <= TIE_RTOL * (1.0 + best.abs()))
        .map(|r| r.0)
        .collect();
    Some((modes, best))
}

/// Collapses the `p` control modes of a scalar workload to `(L1, L2)`.
pub fn mode_reduction(g: &DMatrix<f64>, kappa: &DVector<f64>) -> Result<ModeReduction> {
    if g.nrows() != 1 || g.ncols() != kappa.len() {
        return Err(Error::Dimension(format!(
            "mode reduction needs G of shape 1 x {}, got {} x {}",
            kappa.len(),
            g.nrows(),
            g.ncols()
        )));
    }
    let gs: Vec<f64> = g.row(0).iter().copied().collect();
    let ks = kappa.as_slice();
    let uncontrollable = |dir: &str| {
        Error::Uncontrollable(format!(
            "no control mode moves the workload {dir}; W is not two-sided controllable"
        ))
    };
    let (up_modes, l1) = cheapest(&gs, ks, 1.0).ok_or_else(|| uncontrollable("up"))?;
    let (down_modes, l2) = cheapest(&gs, ks, -1.0).ok_or_else(|| uncontrollable("down"))?;
    if !(l1 + l2 > 0.0) {
        return Err(Error::InvalidInput(format!("l1 + l2 = {} must be positive", l1 + l2)));
    }
    let p = gs.len();
    let mut up_map = DVector::zeros(p);
    up_map[up_modes[0]] = 1.0 / gs[up_modes[0]];
    let mut down_map = DVector::zeros(p);
    down_map[down_modes[0]] = 1.0 / gs[down_modes[0]].abs();
    Ok(ModeReduction {
        up_modes,
        down_modes,
        l1,
        l2,
        up_map,
        down_map,
    })
}

/// Reflection at `lo` and at `b_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierPolicy {
    pub lo: f64,
    pub b_star: f64,
    pub modes: ModeReduction,
}

impl BarrierPolicy {
    pub fn new(lo: f64, b_star: f64, w_hi: f64, modes: ModeReduction) -> Result<Self> {
        if !(b_star > lo) || b_star > w_hi * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!("barrier {b_star} outside ({lo}, {w_hi}]")));
        }
        Ok(BarrierPolicy { lo, b_star, modes })
    }
}

/// Discounted pieces of one reflected workload path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BarrierPathCost {
    /// Left-Riemann `∫ e^{-αs} ǧ(W) ds`.
    pub holding: f64,
    pub l1_discounted: f64,
    pub l2_discounted: f64,
}

impl BarrierPathCost {
    pub fn total(&self, l1: f64, l2: f64) -> f64 {
        self.holding + l1 * self.l1_discounted + l2 * self.l2_discounted
    }
}

/// Noise batch size for [`barrier_path_cost`].
const BLOCK: usize = 1024;

/// One path of the reflected workload on `[lo, hi]`, drawn from the workload
/// stream of `(seed, path_index)`, so every barrier sees the same noise.
#[allow(clippy::too_many_arguments)]
pub fn barrier_path_cost<S: Selection + ?Sized>(
    reduced: &ReducedNetworkData,
    sel: &S,
    alpha: f64,
    lo: f64,
    hi: f64,
    grid: &TimeGrid,
    seed: u64,
    path_index: u64,
) -> Result<BarrierPathCost> {
    use rand_distr::{Distribution, StandardNormal};
    if reduced.d != 1 {
        return Err(Error::Dimension("barrier policies need a scalar workload".into()));
    }
    let dt = grid.dt;
    let scale = (reduced.gamma[(0, 0)] * dt).sqrt();
    let drift = reduced.vartheta[0] * dt;
    let mut rng = path_rng(seed, path_index, StreamKind::Workload);
    let mut w = reduced.w0[0];
    if !(lo..=hi).contains(&w) {
        return Err(Error::InvalidInput(format!(
            "initial workload {w} outside [{lo}, {hi}]"
        )));
    }
    let mut z = vec![0.0; sel.state_dim()];
    let mut out = BarrierPathCost::default();
    let q = (-alpha * dt).exp();
    let mut disc = 1.0;
    let mut buf = vec![0.0; BLOCK];
    let mut k = 0;
    while k < grid.steps {
        let block = BLOCK.min(grid.steps - k);
        for x in buf[..block].iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        for xi in &buf[..block] {
            out.holding += disc * sel.select_into(&[w], &mut z)?;
            let (next, d1, d2) = regulate_step(w, drift + scale * xi, lo, hi);
            w = next;
            k += 1;
            disc = if k % 4096 == 0 {
                (-alpha * dt * k as f64).exp()
            } else {
                disc * q
            };
            out.l1_discounted += disc * d1;
            out.l2_discounted += disc * d2;
        }
    }
    out.holding *= dt;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub path_costs: Vec<f64>,
    /// `sup ǧ · e^{-αT} / α`, the holding cost beyond the horizon.
    pub tail_bound: f64,
}

/// Monte Carlo estimate of the discounted cost of a barrier policy.
#[allow(clippy::too_many_arguments)]
pub fn simulate_barrier_policy<S: Selection + ?Sized>(
    policy: &BarrierPolicy,
    reduced: &ReducedNetworkData,
    sel: &S,
    alpha: f64,
    sup_gcheck: f64,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<BarrierEstimate> {
    if let Some((_, hi)) = reduced.space.interval() {
        if policy.b_star > hi * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "barrier {} above the workload range {hi}",
                policy.b_star
            )));
        }
    }
    let (l1, l2) = (policy.modes.l1, policy.modes.l2);
    let path_costs = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            barrier_path_cost(reduced, sel, alpha, policy.lo, policy.b_star, grid, seed, i).map(|c| c.total(l1, l2))
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, stderr) = mean_stderr(&path_costs);
    Ok(BarrierEstimate {
        mean,
        stderr,
        path_costs,
        tail_bound: sup_gcheck * (-alpha * grid.horizon()).exp() / alpha,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeSettings {
    pub n_paths: usize,
    pub grid: TimeGrid,
    pub seed: u64,
    /// Final bracket width; the default is `0.02 · w_hi`.
    pub b_tol: f64,
    /// Extra equally spaced barriers evaluated for the reported profile.
    pub profile_points: usize,
}

#[derive(Debug, Clone)]
pub struct ProfilePoint {
    pub b: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub b_star: f64,
    pub cost: f64,
    pub stderr: f64,
    /// Every evaluated barrier, ascending in `b`.
    pub profile: Vec<ProfilePoint>,
    pub warnings: Vec<String>,
}

struct CrnProfile<'a, S: ?Sized> {
    reduced: &'a ReducedNetworkData,
    sel: &'a S,
    alpha: f64,
    lo: f64,
    l1: f64,
    l2: f64,
    settings: OptimizeSettings,
    cache: BTreeMap<u64, Vec<f64>>,
}

impl<S: Selection + ?Sized> CrnProfile<'_, S> {
    fn costs(&mut self, b: f64) -> Result<&Vec<f64>> {
        let key = b.to_bits();
        if !self.cache.contains_key(&key) {
            let s = &self.settings;
            let costs = (0..s.n_paths as u64)
                .into_par_iter()
                .map(|i| {
                    barrier_path_cost(self.reduced, self.sel, self.alpha, self.lo, b, &s.grid, s.seed, i)
                        .map(|c| c.total(self.l1, self.l2))
                })
                .collect::<Result<Vec<f64>>>()?;
            self.cache.insert(key, costs);
        }
        Ok(&self.cache[&key])
    }

    fn mean(&mut self, b: f64) -> Result<f64> {
        Ok(mean_stderr(self.costs(b)?).0)
    }

    /// Stderr of the paired difference of two evaluated barriers.
    fn paired_stderr(&mut self, a: f64, b: f64) -> Result<f64> {
        let ca = self.costs(a)?.clone();
        let cb = self.costs(b)?;
        let diff: Vec<f64> = ca.iter().zip(cb).map(|(x, y)| x - y).collect();
        Ok(mean_stderr(&diff).1)
    }
}

/// Golden-section search for the upper barrier over `[b_min, b_max]` on one
/// fixed set of paths. Returns the best of the final bracket midpoint and
/// the two ends of the search interval; ties go to the larger barrier.
pub fn optimize_barrier<S: Selection + ?Sized>(
    reduced: &ReducedNetworkData,
    sel: &S,
    alpha: f64,
    modes: &ModeReduction,
    search: (f64, f64),
    settings: OptimizeSettings,
) -> Result<OptimizeResult> {
    if !(modes.l2 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "barrier search needs l2 > 0, got {}",
            modes.l2
        )));
    }
    let (b_min, b_max) = search;
    let lo = reduced.space.interval().map(|i| i.0).unwrap_or(0.0);
    if !(b_min > lo && b_max > b_min) || settings.n_paths == 0 || !(settings.b_tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bad search interval [{b_min}, {b_max}] or settings"
        )));
    }
    let mut prof = CrnProfile {
        reduced,
        sel,
        alpha,
        lo,
        l1: modes.l1,
        l2: modes.l2,
        settings,
        cache: BTreeMap::new(),
    };
    let mut warnings = Vec::new();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (b_min, b_max);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (prof.mean(c)?, prof.mean(d)?);
    while b - a > settings.b_tol {
        let se = prof.paired_stderr(c, d)?;
        if (fc - fd).abs() <= 2.0 * se {
            warnings.push(format!(
                "costs at b = {c:.4} and b = {d:.4} differ by {:.3e}, within twice the paired stderr {se:.3e}",
                fc - fd
            ));
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = prof.mean(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = prof.mean(d)?;
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, prof.mean(mid)?);
    for cand in [b_min, b_max] {
        let f = prof.mean(cand)?;
        if f < best.1 || (f == best.1 && cand > best.0) {
            best = (cand, f);
        }
    }
    if settings.profile_points >= 2 {
        for i in 0..settings.profile_points {
            let t = i as f64 / (settings.profile_points - 1) as f64;
            prof.costs(b_min + t * (b_max - b_min))?;
        }
    }
    let stderr = mean_stderr(prof.costs(best.0)?).1;
    let profile = prof
        .cache
        .iter()
        .map(|(k, v)| {
            let (mean, stderr) = mean_stderr(v);
            ProfilePoint {
                b: f64::from_bits(*k),
                mean,
                stderr,
            }
        })
        .collect::<Vec<_>>();
    let mut profile = profile;
    profile.sort_by(|x, y| x.b.total_cmp(&y.b));
    Ok(OptimizeResult {
        b_star: best.0,
        cost: best.1,
        stderr,
        profile,
        warnings,
    })
}

/// A reflected workload path with its free motion, on the array grid.
pub fn simulate_barrier_path(
    policy: &BarrierPolicy,
    reduced: &ReducedNetworkData,
    grid: &TimeGrid,
    seed: u64,
    path_index: u64,
) -> Result<(Path, crate::pathsim::Regulated)> {
    let chi = simulate_bm(
        reduced.w0.as_slice(),
        reduced.vartheta.as_slice(),
        &reduced.gamma,
        grid,
        seed,
        path_index,
    )?;
    let reg = two_sided_regulator(&chi.data, policy.lo, policy.b_star, reduced.w0[0])?;
    Ok((chi, reg))
}

/// Rebuilds `U` from `(L1, L2)` and lifts the path to the full network.
#[allow(clippy::too_many_arguments)]
pub fn translate_policy_to_bcp<S: Selection + ?Sized>(
    policy: &BarrierPolicy,
    chi: Path,
    regulated: crate::pathsim::Regulated,
    data: &NetworkData,
    red: &WorkloadReduction,
    plan: &ExtensionPlan,
    sel: &S,
    grid: &TimeGrid,
    seed: u64,
    path_index: u64,
) -> Result<PathBundle> {
    let points = grid.len();
    let mut u = Path::zeros(data.p, points);
    for k in 0..points {
        let uk = policy.modes.control(regulated.l1[k], regulated.l2[k]);
        u.at_mut(k).copy_from_slice(uk.as_slice());
    }
    let w = Path::from_scalars(regulated.w);
    let mut bundle = lift_control(u, w, chi, data, red, plan, sel, grid, seed, path_index)?;
    bundle.l1 = Some(regulated.l1);
    bundle.l2 = Some(regulated.l2);
    Ok(bundle)
}

/// The two-server network reduced with `M = (2, 1)` and `π = (1, 1/2)`, with
/// the closed-form selection and its mode reduction.
#[derive(Debug, Clone)]
pub struct TwoServerModel {
    pub params: TwoServerParams,
    pub data: NetworkData,
    pub red: WorkloadReduction,
    pub reduced: ReducedNetworkData,
    pub ec: EffectiveCost,
    pub plan: ExtensionPlan,
    pub modes: ModeReduction,
}

impl TwoServerModel {
    pub fn new(params: TwoServerParams) -> Result<Self> {
        let data = NetworkData::two_server(&params)?;
        let m = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let pi = DVector::from_column_slice(&[1.0, 0.5]);
        let (red, reduced) = reduce_network(&data, Some(&m), Some(&pi))?;
        let ec = EffectiveCost::new(&data, &red).with_two_server_closed_form(params);
        let plan = ExtensionPlan::new(&red.m, &data.sigma, &data.theta, &data.z0, &red.rev_basis)?;
        let modes = mode_reduction(&red.g, &red.kappa)?;
        Ok(TwoServerModel {
            params,
            data,
            red,
            reduced,
            ec,
            plan,
            modes,
        })
    }

    /// Upper end of the workload interval, `3b`.
    pub fn w_hi(&self) -> f64 {
        self.reduced.space.interval().map(|i| i.1).unwrap_or(0.0)
    }

    pub fn default_b_tol(&self) -> f64 {
        0.02 * self.w_hi()
    }

    pub fn barrier(&self, b_star: f64) -> Result<BarrierPolicy> {
        BarrierPolicy::new(0.0, b_star, self.w_hi(), self.modes.clone())
    }

    /// Golden-section search over `[10^-3 w_hi, w_hi]`.
    pub fn optimize(&self, settings: OptimizeSettings) -> Result<OptimizeResult> {
        let w_hi = self.w_hi();
        optimize_barrier(
            &self.reduced,
            &self.ec,
            self.data.alpha,
            &self.modes,
            (1e-3 * w_hi, w_hi),
            settings,
        )
    }
}

/// `max |ǧ|` over `n` equally spaced workloads in `[lo, hi]`.
pub fn sup_gcheck<S: Selection + ?Sized>(sel: &S, lo: f64, hi: f64, n: usize) -> Result<f64> {
    let mut z = vec![0.0; sel.state_dim()];
    let mut sup = 0.0f64;
    for i in 0..n.max(2) {
        let w = lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64;
        sup = sup.max(sel.select_into(&[w], &mut z)?.abs());
    }
    Ok(sup)
}

/// Per-seed comparison of the two discounted costs under one barrier policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedEquivalence {
    pub seed: u64,
    pub n_paths: usize,
    /// Mean of `ζ(T)`.
    pub j: f64,
    pub j_stderr: f64,
    /// Mean of `ζ̌(T)`.
    pub j_check: f64,
    pub j_check_stderr: f64,
    /// `π'z° + π'θ/α`.
    pub offset_i: f64,
    /// `Ĵ + I - Ĵ̌`.
    pub residual: f64,
    /// `sqrt(se(Ĵ)² + se(Ĵ̌)²)`.
    pub combined_stderr: f64,
    /// Standard error of the paired difference `ζ - ζ̌`.
    pub paired_stderr: f64,
    /// Mean of `ζ(T) + α∫e^{-αs}π'X ds - ζ̌(T)`.
    pub mean_pathwise_residual: f64,
    /// Mean absolute pathwise residual with the terminal boundary term removed.
    pub mean_abs_discretization: f64,
    pub max_identity_residual: f64,
}

/// Streams `n_paths` lifted barrier paths for each seed.
#[allow(clippy::too_many_arguments)]
pub fn equivalence_by_seed<S: Selection + ?Sized>(
    data: &NetworkData,
    red: &WorkloadReduction,
    reduced: &ReducedNetworkData,
    plan: &ExtensionPlan,
    sel: &S,
    policy: &BarrierPolicy,
    settings: &StreamSettings,
    seeds: &[u64],
    n_paths: usize,
) -> Result<Vec<SeedEquivalence>> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("at least one path per seed is needed".into()));
    }
    let map = policy.modes.control_map();
    let wp = WorkloadPolicy::Barrier {
        lo: policy.lo,
        hi: policy.b_star,
    };
    let offset = offset_i(&red.pi, &data.z0, &data.theta, data.alpha);
    seeds
        .iter()
        .map(|&seed| {
            let paths = (0..n_paths as u64)
                .into_par_iter()
                .map(|i| stream_lifted_path(data, red, reduced, plan, sel, &map, wp, settings, seed, i))
                .collect::<Result<Vec<StreamedPath>>>()?;
            let col = |f: &dyn Fn(&StreamedPath) -> f64| paths.iter().map(f).collect::<Vec<f64>>();
            let (j, j_stderr) = mean_stderr(&col(&|p| p.zeta));
            let (j_check, j_check_stderr) = mean_stderr(&col(&|p| p.zeta_check));
            let paired_stderr = mean_stderr(&col(&|p| p.zeta - p.zeta_check)).1;
            Ok(SeedEquivalence {
                seed,
                n_paths,
                j,
                j_stderr,
                j_check,
                j_check_stderr,
                offset_i: offset,
                residual: j + offset - j_check,
                combined_stderr: j_stderr.hypot(j_check_stderr),
                paired_stderr,
                mean_pathwise_residual: mean_stderr(&col(&|p| p.equivalence_residual())).0,
                mean_abs_discretization: mean_stderr(&col(&|p| p.discretization_residual().abs())).0,
                max_identity_residual: paths.iter().map(|p| p.max_identity_residual).fold(0.0, f64::max),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathsim::{cost_rbcp, discounted_stieltjes};

    struct Fixture {
        data: NetworkData,
        red: WorkloadReduction,
        reduced: ReducedNetworkData,
        ec: EffectiveCost,
        plan: ExtensionPlan,
    }

    fn fixture(v4: f64) -> Fixture {
        let params = TwoServerParams {
            v4,
            ..TwoServerParams::default()
        };
        let data = NetworkData::two_server(&params).unwrap();
        let m = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let pi = DVector::from_column_slice(&[1.0, 0.5]);
        let (red, reduced) = reduce_network(&data, Some(&m), Some(&pi)).unwrap();
        let ec = EffectiveCost::new(&data, &red).with_two_server_closed_form(params);
        let plan = ExtensionPlan::new(&red.m, &data.sigma, &data.theta, &data.z0, &red.rev_basis).unwrap();
        Fixture {
            data,
            red,
            reduced,
            ec,
            plan,
        }
    }

    #[test]
    fn modes_for_three_price_regimes() {
        let f = fixture(1.2);
        let mr = mode_reduction(&f.red.g, &f.red.kappa).unwrap();
        assert_eq!(mr.up_modes, vec![0]);
        assert_eq!(mr.down_modes, vec![2]);
        assert!(mr.l1.abs() < 1e-12 && (mr.l2 - 0.3).abs() < 1e-12);
        let mr = mode_reduction(&fixture(0.8).red.g, &fixture(0.8).red.kappa).unwrap();
        assert_eq!(mr.down_modes, vec![3, 4]);
        assert!((mr.l2 - 0.5).abs() < 1e-12);
        let f1 = fixture(1.0);
        let mr = mode_reduction(&f1.red.g, &f1.red.kappa).unwrap();
        assert_eq!(mr.down_modes, vec![2, 3, 4]);
        assert!((mr.l2 - 0.5).abs() < 1e-12);
        let g = &f1.red.g * mr.control(3.0, 1.0);
        assert!((g[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn one_sided_effort_is_uncontrollable() {
        let g = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let kappa = DVector::from_column_slice(&[1.0, 1.0]);
        assert!(matches!(mode_reduction(&g, &kappa), Err(Error::Uncontrollable(_))));
    }

    #[test]
    fn reconstructed_control_for_unit_pushes() {
        let f = fixture(1.2);
        let mr = mode_reduction(&f.red.g, &f.red.kappa).unwrap();
        let u = mr.control(4.0, 1.5);
        let want = [2.0, 0.0, 1.5, 0.0, 0.0];
        assert!(u.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12), "{u}");
    }

    #[test]
    fn zero_costs_give_zero() {
        let f = fixture(1.2);
        let mut mr = mode_reduction(&f.red.g, &f.red.kappa).unwrap();
        mr.l1 = 0.0;
        mr.l2 = 0.0;
        struct Zero;
        impl Selection for Zero {
            fn state_dim(&self) -> usize {
                2
            }
            fn workload_dim(&self) -> usize {
                1
            }
            fn select_into(&self, _: &[f64], _: &mut [f64]) -> Result<f64> {
                Ok(0.0)
            }
        }
        let policy = BarrierPolicy {
            lo: 0.0,
            b_star: 2.0,
            modes: mr,
        };
        let grid = TimeGrid::new(0.01, 5.0).unwrap();
        let est = simulate_barrier_policy(&policy, &f.reduced, &Zero, 0.1, 0.0, &grid, 8, 1).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn rbcp_cost_matches_mode_form() {
        let f = fixture(1.2);
        let mr = mode_reduction(&f.red.g, &f.red.kappa).unwrap();
        let policy = BarrierPolicy::new(0.0, 2.0, 30.0, mr.clone()).unwrap();
        let grid = TimeGrid::new(1e-3, 5.0).unwrap();
        let (chi, reg) = simulate_barrier_path(&policy, &f.reduced, &grid, 3, 0).unwrap();
        let b =
            translate_policy_to_bcp(&policy, chi, reg.clone(), &f.data, &f.red, &f.plan, &f.ec, &grid, 3, 0).unwrap();
        let c = cost_rbcp(&b.w, &b.u, &f.ec, &f.red.kappa, 0.1, &grid, 0.0).unwrap();
        let mode_form = c.holding
            + mr.l1 * discounted_stieltjes(&reg.l1, 0.1, grid.dt)
            + mr.l2 * discounted_stieltjes(&reg.l2, 0.1, grid.dt);
        assert!((c.zeta_t - mode_form).abs() < 1e-10);
        let gu: Vec<f64> = (0..grid.len())
            .map(|k| (&f.red.g * b.u.vector(k))[0] - (reg.l1[k] - reg.l2[k]))
            .collect();
        assert!(gu.iter().all(|r| r.abs() < 1e-12));
        assert!(b.identity_residuals(&f.data, &f.red).max() < 1e-8);
    }

    #[test]
    fn fused_and_array_paths_agree() {
        let f = fixture(1.2);
        let mr = mode_reduction(&f.red.g, &f.red.kappa).unwrap();
        let policy = BarrierPolicy::new(0.0, 3.0, 30.0, mr.clone()).unwrap();
        let grid = TimeGrid::new(1e-3, 4.0).unwrap();
        let (chi, reg) = simulate_barrier_path(&policy, &f.reduced, &grid, 8, 2).unwrap();
        let bundle = translate_policy_to_bcp(&policy, chi, reg, &f.data, &f.red, &f.plan, &f.ec, &grid, 8, 2).unwrap();
        let settings = StreamSettings {
            grid,
            substeps: 1,
            check_identities: true,
        };
        let s = stream_lifted_path(
            &f.data,
            &f.red,
            &f.reduced,
            &f.plan,
            &f.ec,
            &mr.control_map(),
            WorkloadPolicy::Barrier { lo: 0.0, hi: 3.0 },
            &settings,
            8,
            2,
        )
        .unwrap();
        let bcp = crate::pathsim::cost_bcp(&bundle.z, &bundle.y, &f.data.h, &f.data.v, 0.1, &grid, 0.0);
        let rbcp = cost_rbcp(&bundle.w, &bundle.u, &f.ec, &f.red.kappa, 0.1, &grid, 0.0).unwrap();
        assert!(
            (s.zeta - bcp.zeta_t).abs() < 1e-8 * (1.0 + bcp.zeta_t.abs()),
            "{} vs {}",
            s.zeta,
            bcp.zeta_t
        );
        assert!((s.zeta_check - rbcp.zeta_t).abs() < 1e-8 * (1.0 + rbcp.zeta_t.abs()));
        assert!(s.max_identity_residual < 1e-8);
        let reduced_only = barrier_path_cost(&f.reduced, &f.ec, 0.1, 0.0, 3.0, &grid, 8, 2).unwrap();
        assert!((reduced_only.total(mr.l1, mr.l2) - s.zeta_check).abs() < 1e-8 * (1.0 + s.zeta_check.abs()));
    }

    #[test]
    fn free_cost_prefers_the_top_barrier() {
        let f = fixture(1.2);
        let mr = mode_reduction(&f.red.g, &f.red.kappa).unwrap();
        struct Zero;
        impl Selection for Zero {
            fn state_dim(&self) -> usize {
                2
            }
            fn workload_dim(&self) -> usize {
                1
            }
            fn select_into(&self, _: &[f64], _: &mut [f64]) -> Result<f64> {
                Ok(0.0)
            }
        }
        let settings = OptimizeSettings {
            n_paths: 16,
            grid: TimeGrid::new(0.01, 10.0).unwrap(),
            seed: 4,
            b_tol: 0.6,
            profile_points: 0,
        };
        let res = optimize_barrier(&f.reduced, &Zero, 0.1, &mr, (0.03, 30.0), settings).unwrap();
        assert_eq!(res.b_star, 30.0);
    }
}
