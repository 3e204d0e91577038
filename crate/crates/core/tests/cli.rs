use std::fs;

use workload_reduction::cli::run;

fn data(name: &str) -> String {
    format!("{}/examples/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn check_exit_codes() {
    assert_eq!(run(["wf", "check", &data("two_server.json")]), 0);
    assert_eq!(run(["wf", "check", &data("arbitrage.json")]), 1);
    assert_eq!(run(["wf", "check", &data("one_sided.json")]), 1);
    assert_eq!(run(["wf", "check", &data("missing.json")]), 2);
    assert_eq!(run(["wf", "check", "--bogus", &data("two_server.json")]), 2);
}

#[test]
fn reduce_writes_scaled_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run([
            "wf",
            "reduce",
            &data("two_server.json"),
            "--M",
            "2 1",
            "--pi",
            "1 0.5",
            "--out",
            out
        ]),
        0
    );
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reduction.json")).unwrap()).unwrap();
    let g: Vec<f64> = doc["G"][0]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let kappa: Vec<f64> = doc["kappa"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for (a, b) in g.iter().zip([2.0, 1.0, -1.0, -2.0, -1.0]) {
        assert!((a - b).abs() < 1e-10);
    }
    for (a, b) in kappa.iter().zip([0.0, 0.5, 0.3, 1.0, 0.5]) {
        assert!((a - b).abs() < 1e-10);
    }
    assert_eq!(doc["W"]["hi"].as_f64().unwrap(), 30.0);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = dir.path().to_str().unwrap();
        let args = [
            "wf",
            "optimize",
            "--paths",
            "20",
            "--seed",
            "3",
            "--dt",
            "0.01",
            "--horizon",
            "20",
            "--profile-points",
            "3",
            "--out",
            out,
        ];
        assert_eq!(run(args), 0);
        let args = [
            "wf",
            "simulate",
            &data("two_server.json"),
            "--policy",
            "ball:5,5,2",
            "--paths",
            "10",
            "--dt",
            "0.01",
            "--horizon",
            "10",
            "--seed",
            "4",
            "--out",
            out,
        ];
        assert_eq!(run(args), 0);
        assert_eq!(
            run([
                "wf",
                "effcost",
                &data("two_server.json"),
                "--points",
                "11",
                "--out",
                out
            ]),
            0
        );
        assert_eq!(
            run([
                "wf",
                "counterexample",
                "--points",
                "11",
                "--z2-points",
                "401",
                "--out",
                out
            ]),
            0
        );
    }
    for name in [
        "profile.csv",
        "paths_summary.csv",
        "paths_aggregate.csv",
        "effcost.csv",
        "counterexample.csv",
    ] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn equivalence_writes_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "wf",
        "equivalence",
        "--b-star",
        "2",
        "--seeds",
        "5 6 7",
        "--paths",
        "4",
        "--dt",
        "0.01",
        "--horizon",
        "5",
        "--check-identities",
        "--out",
        out,
    ];
    assert_eq!(run(args), 0);
    let body = fs::read_to_string(dir.path().join("equivalence.csv")).unwrap();
    assert_eq!(body.lines().count(), 4);
}

#[test]
fn barrier_above_workload_range_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = [
        "wf",
        "simulate",
        &data("two_server.json"),
        "--policy",
        "barrier:40",
        "--seed",
        "1",
        "--horizon",
        "1",
        "--out",
        out,
    ];
    assert_eq!(run(args), 2);
}
