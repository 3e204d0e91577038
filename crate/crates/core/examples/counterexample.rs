//! A quasiconvex cost whose fiber minimizer jumps while the minimum value
//! stays continuous.
//!
//! ```text
//! cargo run --example counterexample
//! ```

use workload_reduction::effective_cost::{discontinuity_probe, scalar_grid};

fn main() -> workload_reduction::Result<()> {
    let w: Vec<f64> = [0.9, 0.99, 1.01, 1.1].to_vec();
    let z2: Vec<f64> = scalar_grid(-2.0, 2.0, 4001).into_iter().map(|v| v[0]).collect();
    for row in discontinuity_probe(&w, &z2)? {
        println!(
            "w = {:>5.2}  min = {:.6}  argmin z2 = {:+.6}",
            row.w, row.value, row.argmin_z2
        );
    }
    Ok(())
}
