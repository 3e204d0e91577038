//! Discounted cost of a barrier policy in both formulations, per seed.
//!
//! ```text
//! cargo run --example equivalence
//! ```

use workload_reduction::pathsim::{StreamSettings, TimeGrid};
use workload_reduction::policy::{equivalence_by_seed, TwoServerModel};
use workload_reduction::TwoServerParams;

fn main() -> workload_reduction::Result<()> {
    let model = TwoServerModel::new(TwoServerParams::default())?;
    let policy = model.barrier(1.9)?;
    let settings = StreamSettings {
        grid: TimeGrid::new(1e-3, 60.0)?,
        substeps: 1,
        check_identities: true,
    };
    let rows = equivalence_by_seed(
        &model.data,
        &model.red,
        &model.reduced,
        &model.plan,
        &model.ec,
        &policy,
        &settings,
        &[1, 2],
        200,
    )?;
    for r in rows {
        println!(
            "seed {}: J = {:.4} +/- {:.4}, J_check = {:.4} +/- {:.4}, I = {}, J + I - J_check = {:+.4}, pathwise {:+.2e}",
            r.seed, r.j, r.j_stderr, r.j_check, r.j_check_stderr, r.offset_i, r.residual, r.mean_pathwise_residual
        );
    }
    Ok(())
}
