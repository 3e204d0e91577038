//! The recentering control that keeps the state in a ball, with its
//! analytic cost bound.
//!
//! ```text
//! cargo run --example baseline_ball
//! ```

use workload_reduction::pathsim::{baseline_ball_control, TimeGrid};
use workload_reduction::{NetworkData, TwoServerParams};

fn main() -> workload_reduction::Result<()> {
    let data = NetworkData::two_server(&TwoServerParams::default())?;
    let grid = TimeGrid::new(1e-2, 100.0)?;
    let rep = baseline_ball_control(&data, &[5.0, 5.0], 2.0, &grid, 3, 200)?;
    println!(
        "cost {:.2} +/- {:.2}, bound {:.2}",
        rep.cost_mean, rep.cost_stderr, rep.bound
    );
    println!(
        "beta {:.4} +/- {:.4}, jumps per path {:.1}",
        rep.beta_hat, rep.beta_stderr, rep.mean_jumps
    );
    Ok(())
}
