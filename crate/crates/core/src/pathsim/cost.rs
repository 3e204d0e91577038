//! Discounted cost functionals on a grid.

use nalgebra::DVector;

use super::{Path, TimeGrid};
use crate::effective_cost::Selection;
use crate::error::Result;
use crate::model::{NetworkData, QuadraticCost};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostBreakdown {
    /// Left-Riemann sum of the discounted holding cost.
    pub holding: f64,
    /// Discounted Stieltjes integral of the control cost process.
    pub control: f64,
    /// The offset `I` when the caller supplies it, else 0.
    pub offset_i: f64,
    /// `holding + control`.
    pub zeta_t: f64,
    /// `sup |holding rate| · e^{-αT} / α`.
    pub tail_bound: f64,
    /// Bound on the negative part of the control tail, when available.
    pub control_tail_bound: Option<f64>,
    /// Jump-sum minus integration-by-parts form of the control term.
    pub by_parts_residual: f64,
}

/// `F(0) + Σ_k e^{-α t_{k+1}} (F(t_{k+1}) - F(t_k))`.
pub fn discounted_stieltjes(f: &[f64], alpha: f64, dt: f64) -> f64 {
    let Some(&first) = f.first() else { return 0.0 };
    let mut s = first;
    for k in 0..f.len() - 1 {
        s += (-alpha * dt * (k + 1) as f64).exp() * (f[k + 1] - f[k]);
    }
    s
}

/// `α Σ_k e^{-α t_k} F(t_k) Δt + e^{-αT} F(T)` over the left points.
pub fn discounted_by_parts(f: &[f64], alpha: f64, dt: f64) -> f64 {
    let n = f.len();
    if n == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for (k, v) in f.iter().enumerate().take(n - 1) {
        s += (-alpha * dt * k as f64).exp() * v;
    }
    alpha * s * dt + (-alpha * dt * (n - 1) as f64).exp() * f[n - 1]
}

fn left_riemann(values: impl Iterator<Item = f64>, alpha: f64, dt: f64, steps: usize) -> f64 {
    values
        .take(steps)
        .enumerate()
        .map(|(k, v)| (-alpha * dt * k as f64).exp() * v)
        .sum::<f64>()
        * dt
}

/// `ζ(T)` for a state path `Z` and control path `Y`.
pub fn cost_bcp(
    z: &Path,
    y: &Path,
    h: &QuadraticCost,
    v: &DVector<f64>,
    alpha: f64,
    grid: &TimeGrid,
    sup_h: f64,
) -> CostBreakdown {
    let holding = left_riemann((0..grid.len()).map(|k| h.eval(z.at(k))), alpha, grid.dt, grid.steps);
    let f: Vec<f64> = (0..grid.len())
        .map(|k| y.at(k).iter().zip(v.iter()).map(|(a, b)| a * b).sum())
        .collect();
    let control = discounted_stieltjes(&f, alpha, grid.dt);
    CostBreakdown {
        holding,
        control,
        offset_i: 0.0,
        zeta_t: holding + control,
        tail_bound: sup_h * (-alpha * grid.horizon()).exp() / alpha,
        control_tail_bound: None,
        by_parts_residual: control - discounted_by_parts(&f, alpha, grid.dt),
    }
}

/// `ζ̌(T)` for a workload path `W` and control path `U`.
pub fn cost_rbcp<S: Selection + ?Sized>(
    w: &Path,
    u: &Path,
    sel: &S,
    kappa: &DVector<f64>,
    alpha: f64,
    grid: &TimeGrid,
    sup_gcheck: f64,
) -> Result<CostBreakdown> {
    let mut z = vec![0.0; sel.state_dim()];
    let mut gvals = Vec::with_capacity(grid.len());
    for k in 0..grid.steps {
        gvals.push(sel.select_into(w.at(k), &mut z)?);
    }
    let holding = left_riemann(gvals.into_iter(), alpha, grid.dt, grid.steps);
    let f: Vec<f64> = (0..grid.len())
        .map(|k| u.at(k).iter().zip(kappa.iter()).map(|(a, b)| a * b).sum())
        .collect();
    let control = discounted_stieltjes(&f, alpha, grid.dt);
    Ok(CostBreakdown {
        holding,
        control,
        offset_i: 0.0,
        zeta_t: holding + control,
        tail_bound: sup_gcheck * (-alpha * grid.horizon()).exp() / alpha,
        control_tail_bound: None,
        by_parts_residual: control - discounted_by_parts(&f, alpha, grid.dt),
    })
}

/// `I = π'z° + π'θ/α`.
pub fn offset_i(pi: &DVector<f64>, z0: &DVector<f64>, theta: &DVector<f64>, alpha: f64) -> f64 {
    pi.dot(z0) + pi.dot(theta) / alpha
}

/// Smallest `T >= 1/α` with `e^{-αT} sup / α <= rel · |estimate|`; with a zero
/// estimate the target is absolute.
pub fn auto_horizon(alpha: f64, sup_cost: f64, estimate: f64, rel: f64) -> f64 {
    let target = rel * if estimate.abs() > 0.0 { estimate.abs() } else { 1.0 };
    let ratio = sup_cost / (alpha * target);
    let t = if ratio > 1.0 { ratio.ln() / alpha } else { 0.0 };
    t.max(1.0 / alpha)
}

/// Bound on `α∫_T^∞ e^{-αs}(v'Y)^- ds + e^{-αT}(v'Y(T))^-` using
/// `(v'Y)^- <= γ(|Z|_∞ + |X|_∞)` and first moments of `X`.
pub fn control_tail_bound(data: &NetworkData, gamma: f64, horizon: f64) -> f64 {
    let alpha = data.alpha;
    let (lo, hi) = data.state_space.bounding_box();
    let z_max = lo.iter().chain(hi.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let x0: f64 = data.z0.iter().map(|v| v.abs()).sum();
    let drift: f64 = data.theta.iter().map(|v| v.abs()).sum();
    // E|X_i(s) - E X_i(s)| = σ_i √(2s/π) and √s <= (1 + s) / 2
    let vol: f64 = (0..data.m).map(|i| data.sigma[(i, i)].sqrt()).sum::<f64>() * (2.0 / std::f64::consts::PI).sqrt();
    let a = z_max + x0 + vol / 2.0;
    let b = drift + vol / 2.0;
    gamma * (-alpha * horizon).exp() * (2.0 * a + b * (2.0 * horizon + 1.0 / alpha))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_integrator_contributes_only_at_zero() {
        assert_eq!(discounted_stieltjes(&[2.5; 10], 1.0, 0.1), 2.5);
    }

    #[test]
    fn identity_integrator_approaches_inverse_alpha_squared() {
        let dt = 1e-3;
        let f: Vec<f64> = (0..=20_000).map(|k| k as f64 * dt).collect();
        assert!((discounted_stieltjes(&f, 1.0, dt) - 1.0).abs() < 1e-2);
        assert!((discounted_by_parts(&f, 1.0, dt) - 1.0).abs() < 1e-2);
    }

    #[test]
    fn unit_jump_at_one() {
        let dt = 1e-3;
        let f: Vec<f64> = (0..=2000)
            .map(|k| if k as f64 * dt >= 1.0 - 1e-12 { 1.0 } else { 0.0 })
            .collect();
        let v = discounted_stieltjes(&f, 1.0, dt);
        assert!((v - (-1.0f64).exp()).abs() < dt);
    }

    #[test]
    fn offset_examples() {
        let pi = DVector::from_column_slice(&[1.0, 0.0]);
        assert_eq!(offset_i(&pi, &DVector::zeros(2), &DVector::zeros(2), 0.1), 0.0);
        assert_eq!(
            offset_i(&pi, &DVector::from_column_slice(&[3.0, 0.0]), &DVector::zeros(2), 0.1),
            3.0
        );
        assert_eq!(
            offset_i(&pi, &DVector::zeros(2), &DVector::from_column_slice(&[2.0, 0.0]), 0.5),
            4.0
        );
    }

    #[test]
    fn unit_holding_cost() {
        let grid = TimeGrid::new(1e-3, 20.0).unwrap();
        let z = Path::zeros(1, grid.len());
        let y = Path::zeros(1, grid.len());
        let h = QuadraticCost::constant(1, 1.0);
        let c = cost_bcp(&z, &y, &h, &DVector::zeros(1), 1.0, &grid, 1.0);
        assert!((c.zeta_t - (1.0 - (-20.0f64).exp())).abs() < 1e-3);
        assert!(c.tail_bound >= 0.0);
    }

    #[test]
    fn horizon_meets_tolerance() {
        let t = auto_horizon(0.1, 201.5, 50.0, 1e-4);
        assert!((-0.1 * t).exp() * 201.5 / 0.1 <= 1e-4 * 50.0 * (1.0 + 1e-9));
        assert_eq!(auto_horizon(1.0, 1e-9, 1.0, 1e-4), 1.0);
    }
}
