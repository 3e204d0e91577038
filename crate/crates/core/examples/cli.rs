//! The command-line front end driven in-process on the bundled instances.
//!
//! ```text
//! cargo run --example cli
//! ```

use workload_reduction::cli::run;

fn main() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/data");
    let out = std::env::temp_dir().join("wf-example");
    let out = out.to_string_lossy();
    let two_server = format!("{dir}/two_server.json");
    let arbitrage = format!("{dir}/arbitrage.json");
    let code = run(["wf", "check", two_server.as_str()]);
    println!("check two_server -> {code}\n");
    let code = run(["wf", "check", arbitrage.as_str()]);
    println!("check arbitrage -> {code}\n");
    let code = run([
        "wf",
        "reduce",
        two_server.as_str(),
        "--M",
        "2 1",
        "--pi",
        "1 0.5",
        "--out",
        &out,
    ]);
    println!("reduce -> {code}, report in {out}/reduction.json");
}
