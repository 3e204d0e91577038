//! Barrier search on common random numbers, then the lifted full-network
//! path of the chosen policy.
//!
//! ```text
//! cargo run --example barrier_policy
//! ```

use workload_reduction::pathsim::TimeGrid;
use workload_reduction::policy::{simulate_barrier_path, translate_policy_to_bcp, OptimizeSettings, TwoServerModel};
use workload_reduction::TwoServerParams;

fn main() -> workload_reduction::Result<()> {
    let model = TwoServerModel::new(TwoServerParams::default())?;
    println!(
        "up modes {:?} (l1 = {:.3}), down modes {:?} (l2 = {:.3})",
        model.modes.up_modes, model.modes.l1, model.modes.down_modes, model.modes.l2
    );

    let settings = OptimizeSettings {
        n_paths: 400,
        grid: TimeGrid::new(1e-3, 60.0)?,
        seed: 7,
        b_tol: model.default_b_tol(),
        profile_points: 0,
    };
    let res = model.optimize(settings)?;
    println!("b* = {:.3}, cost = {:.4} +/- {:.4}", res.b_star, res.cost, res.stderr);
    for w in &res.warnings {
        println!("warning: {w}");
    }

    let policy = model.barrier(res.b_star)?;
    let grid = TimeGrid::new(1e-3, 10.0)?;
    let (chi, reg) = simulate_barrier_path(&policy, &model.reduced, &grid, 7, 0)?;
    let bundle = translate_policy_to_bcp(
        &policy,
        chi,
        reg,
        &model.data,
        &model.red,
        &model.plan,
        &model.ec,
        &grid,
        7,
        0,
    )?;
    let last = grid.len() - 1;
    println!("U(T) = {:.4?}", bundle.u.at(last));
    println!("Z(T) = {:.4?}", bundle.z.at(last));
    println!(
        "worst identity residual {:.2e}",
        bundle.identity_residuals(&model.data, &model.red).max()
    );
    Ok(())
}
