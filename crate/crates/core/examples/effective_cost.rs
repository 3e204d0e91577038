//! The effective holding cost by fiber minimization, against the closed-form
//! selection of the two-server network.
//!
//! ```text
//! cargo run --example effective_cost
//! ```

use nalgebra::{DMatrix, DVector};
use workload_reduction::effective_cost::{effective_cost_curve, scalar_grid, two_server_selection, EffectiveCost};
use workload_reduction::reduction::reduce_network;
use workload_reduction::{NetworkData, TwoServerParams};

fn main() -> workload_reduction::Result<()> {
    let params = TwoServerParams::default();
    let data = NetworkData::two_server(&params)?;
    let m = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
    let pi = DVector::from_column_slice(&[1.0, 0.5]);
    let (red, _) = reduce_network(&data, Some(&m), Some(&pi))?;
    let ec = EffectiveCost::new(&data, &red);

    println!(
        "{:>6} {:>10} {:>18} {:>18}",
        "w", "gcheck", "psi (QP)", "psi (closed form)"
    );
    for row in effective_cost_curve(&ec, &scalar_grid(0.0, 30.0, 7)) {
        let w = row.w[0];
        let psi = row.psi().expect("w is inside the workload interval");
        let exact = two_server_selection(w, params.a1, params.a2, params.b)?;
        println!(
            "{w:>6.1} {:>10.4} ({:>7.4}, {:>7.4}) ({:>7.4}, {:>7.4})",
            row.gcheck().unwrap(),
            psi[0],
            psi[1],
            exact[0],
            exact[1]
        );
    }
    Ok(())
}
