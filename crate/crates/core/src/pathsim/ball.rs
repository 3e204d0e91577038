//! The recentering control: jump to the center of a ball inside `Z`, follow
//! the free motion until it leaves the ball, jump back, repeat.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::mean_stderr;
use super::{path_rng, Increments, StreamKind, TimeGrid};
use crate::assumptions::check_full_displacement;
use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;
use crate::model::NetworkData;

#[derive(Debug, Clone, PartialEq)]
pub struct BallReport {
    pub cost_mean: f64,
    pub cost_stderr: f64,
    /// `sup|h|/α + |v|(|Y(0)| + C(r) β̂ / (1 - β̂))`.
    pub bound: f64,
    /// Monte Carlo estimate of `E[e^{-ατ}]` for the first exit time `τ`.
    pub beta_hat: f64,
    pub beta_stderr: f64,
    pub sup_h: f64,
    pub y0_norm: f64,
    /// `r Σ |y(i)|` over the displacement witnesses.
    pub c_r: f64,
    /// Mean number of recentering jumps per path.
    pub mean_jumps: f64,
    pub path_costs: Vec<f64>,
}

/// `Σ (x_i⁺ y(i) + x_i⁻ y(m+i))` with witnesses as columns of `wit`.
fn displacement_control(wit: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let m = x.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, &xi) in x.iter().enumerate() {
        let col = if xi >= 0.0 { i } else { m + i };
        let s = xi.abs();
        if s == 0.0 {
            continue;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o += s * wit[(j, col)];
        }
    }
}

/// Simulates the recentering control on `n_paths` paths and returns its
/// discounted cost with the analytic upper bound.
pub fn baseline_ball_control(
    data: &NetworkData,
    center: &[f64],
    radius: f64,
    grid: &TimeGrid,
    seed: u64,
    n_paths: usize,
) -> Result<BallReport> {
    let m = data.m;
    if center.len() != m || !(radius > 0.0) || n_paths == 0 {
        return Err(Error::InvalidInput(
            "ball needs an m-dimensional center, r > 0 and at least one path".into(),
        ));
    }
    let (a, b) = (data.state_space.a(), data.state_space.b());
    for i in 0..a.nrows() {
        let row = a.row(i);
        let reach = row.iter().zip(center).map(|(x, c)| x * c).sum::<f64>() + radius * row.norm();
        if reach >= b[i] {
            return Err(Error::InvalidInput(format!(
                "ball B(c, {radius}) is not interior to Z (row {i})"
            )));
        }
    }
    let fd = check_full_displacement(&data.r, &data.k)?;
    let wit = fd
        .witness_matrix()
        .ok_or_else(|| Error::Assumption("full displacement fails; no recentering control exists".into()))?;
    let c_r = radius * wit.column_iter().map(|c| c.norm()).sum::<f64>();
    let c = DVector::from_column_slice(center);
    let mut y0 = vec![0.0; data.n];
    displacement_control(&wit, (&c - &data.z0).as_slice(), &mut y0);
    let y0_norm = DVector::from_column_slice(&y0).norm();
    let sup_h = data.h.sup_abs_over(&data.state_space);
    let chol = cholesky_lower(&data.sigma).ok_or_else(|| Error::NotPositiveDefinite("Sigma".into()))?;
    let v0: f64 = data.v.iter().zip(&y0).map(|(a, b)| a * b).sum();

    let per_path: Vec<(f64, f64, usize)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|idx| {
            let mut inc = Increments::new(
                data.theta.as_slice(),
                &chol,
                grid.dt,
                1,
                path_rng(seed, idx, StreamKind::Full),
            );
            let (alpha, dt) = (data.alpha, grid.dt);
            let mut z = center.to_vec();
            let (mut dx, mut x, mut dy) = (vec![0.0; m], vec![0.0; m], vec![0.0; data.n]);
            let mut holding = 0.0;
            let mut control = v0;
            let mut exit_discount = 0.0;
            let mut jumps = 0;
            for k in 0..grid.steps {
                let disc = (-alpha * dt * k as f64).exp();
                holding += disc * data.h.eval(&z);
                inc.next_into(&mut dx);
                let mut dist2 = 0.0;
                for i in 0..m {
                    z[i] += dx[i];
                    dist2 += (z[i] - center[i]).powi(2);
                }
                if dist2 >= radius * radius {
                    // x = c° - z from the point the motion reached
                    for i in 0..m {
                        x[i] = center[i] - z[i];
                    }
                    displacement_control(&wit, &x, &mut dy);
                    let dv: f64 = data.v.iter().zip(&dy).map(|(a, b)| a * b).sum();
                    let t = dt * (k + 1) as f64;
                    control += (-alpha * t).exp() * dv;
                    if jumps == 0 {
                        exit_discount = (-alpha * t).exp();
                    }
                    jumps += 1;
                    z.copy_from_slice(center);
                }
            }
            if jumps == 0 {
                exit_discount = (-alpha * grid.horizon()).exp();
            }
            (holding * dt + control, exit_discount, jumps)
        })
        .collect();

    let costs: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let betas: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let (cost_mean, cost_stderr) = mean_stderr(&costs);
    let (beta_hat, beta_stderr) = mean_stderr(&betas);
    let bound = sup_h / data.alpha + data.v.norm() * (y0_norm + c_r * beta_hat / (1.0 - beta_hat));
    Ok(BallReport {
        cost_mean,
        cost_stderr,
        bound,
        beta_hat,
        beta_stderr,
        sup_h,
        y0_norm,
        c_r,
        mean_jumps: per_path.iter().map(|p| p.2 as f64).sum::<f64>() / n_paths as f64,
        path_costs: costs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{QuadraticCost, TwoServerParams};

    #[test]
    fn ball_must_be_interior() {
        let data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        let grid = TimeGrid::new(0.01, 1.0).unwrap();
        assert!(baseline_ball_control(&data, &[1.0, 5.0], 2.0, &grid, 1, 4).is_err());
    }

    #[test]
    fn zero_costs_give_zero() {
        let mut data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        data.h = QuadraticCost::constant(2, 0.0);
        data.v = DVector::zeros(6);
        let grid = TimeGrid::new(0.01, 5.0).unwrap();
        let rep = baseline_ball_control(&data, &[5.0, 5.0], 2.0, &grid, 3, 16).unwrap();
        assert!(rep.path_costs.iter().all(|c| *c == 0.0));
        assert!(rep.cost_mean <= rep.bound);
    }

    #[test]
    fn cost_below_bound() {
        let data = NetworkData::two_server(&TwoServerParams::default()).unwrap();
        let grid = TimeGrid::new(0.01, 60.0).unwrap();
        let rep = baseline_ball_control(&data, &[5.0, 5.0], 2.0, &grid, 9, 64).unwrap();
        assert!(rep.beta_hat > 0.0 && rep.beta_hat < 1.0);
        assert!(rep.cost_mean.is_finite());
        assert!(rep.cost_mean <= rep.bound + 3.0 * rep.cost_stderr);
        assert!(rep.mean_jumps > 1.0);
    }
}
