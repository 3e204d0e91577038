//! Workload reduction of the two-server network.
//!
//! ```text
//! cargo run --example reduce
//! ```

use nalgebra::{DMatrix, DVector};
use workload_reduction::reduction::reduce_network;
use workload_reduction::{NetworkData, TwoServerParams};

fn main() -> workload_reduction::Result<()> {
    let data = NetworkData::two_server(&TwoServerParams::default())?;

    let (red, _) = reduce_network(&data, None, None)?;
    println!("default basis: M = {:.4?}", red.m.as_slice());

    let m = DMatrix::from_row_slice(1, 2, &[2.0, 1.0]);
    let pi = DVector::from_column_slice(&[1.0, 0.5]);
    let (red, reduced) = reduce_network(&data, Some(&m), Some(&pi))?;
    println!("G     = {:.4?}", red.g.as_slice());
    println!("kappa = {:.4?}", red.kappa.as_slice());
    println!("Gamma = {:.4}", reduced.gamma[(0, 0)]);
    println!("W     = {:?}", reduced.space.interval());
    println!("identity residuals: {:?}", red.residuals);
    Ok(())
}
