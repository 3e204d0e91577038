//! Full displacement and no arbitrage by linear programming, on a feasible
//! network and on two instances built to fail.
//!
//! ```text
//! cargo run --example check_assumptions
//! ```

use nalgebra::{DMatrix, DVector};
use workload_reduction::assumptions::{check_assumptions, verify_arbitrage_ray};
use workload_reduction::{NetworkData, TwoServerParams};

fn main() -> workload_reduction::Result<()> {
    let data = NetworkData::two_server(&TwoServerParams::default())?;
    let rep = check_assumptions(&data.r, &data.k, &data.v)?;
    println!(
        "two-server: full displacement {}, no arbitrage {}, gamma {:?}, eta {:?}",
        rep.full_displacement.holds, rep.no_arbitrage.holds, rep.gamma, rep.eta
    );

    let r = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let k = DMatrix::identity(2, 2);
    let v = DVector::from_column_slice(&[0.0, -1.0]);
    let rep = check_assumptions(&r, &k, &v)?;
    let ray = rep.no_arbitrage.ray.expect("ray");
    println!(
        "arbitrage: ray {:?} verified {}",
        ray.as_slice(),
        verify_arbitrage_ray(&r, &k, &v, &ray)
    );

    let rep = check_assumptions(&r, &k, &DVector::from_column_slice(&[1.0, 1.0]))?;
    println!("one-sided: full displacement {}", rep.full_displacement.holds);
    Ok(())
}
