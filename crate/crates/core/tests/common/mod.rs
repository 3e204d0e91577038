#![allow(dead_code)]

use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use workload_reduction::assumptions::check_assumptions;

/// Serializes timed checks so that wall-clock limits are measured alone.
pub static TIMED: Mutex<()> = Mutex::new(());

pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

/// Runs `body` under [`TIMED`], prints one pass/fail line and panics on failure.
pub fn criterion(id: u32, name: &str, limit: Duration, body: impl FnOnce() -> Outcome) {
    let _guard = TIMED.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let out = body();
    let elapsed = start.elapsed();
    let in_time = elapsed <= limit;
    let ok = out.passed && in_time;
    println!(
        "criterion {id} {name}: {} ({}; {:.2}s of {:.0}s)",
        if ok { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    assert!(out.passed, "criterion {id} failed: {}", out.detail);
    assert!(in_time, "criterion {id} exceeded {limit:?}: took {elapsed:?}");
}

#[derive(Debug, Clone)]
pub struct RawNetwork {
    pub r: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub v: DVector<f64>,
}

fn small_int(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-2i32..=2) as f64
}

/// A random `(R, K, v)` with `m, n, p <= 6` that passes both assumption
/// checks. `K` always contains `-e_j` rows for a random subset of activities so
/// that the constraint cone is pointed often enough.
pub fn random_network(rng: &mut ChaCha8Rng) -> RawNetwork {
    loop {
        let m = rng.gen_range(1..=3usize);
        let n = rng.gen_range(m + 1..=6usize);
        let p = rng.gen_range(1..=6usize);
        let r = DMatrix::from_fn(m, n, |_, _| small_int(rng));
        let mut k = DMatrix::from_fn(p, n, |_, _| small_int(rng));
        for i in 0..p {
            if rng.gen_bool(0.5) {
                let j = rng.gen_range(0..n);
                k.row_mut(i).fill(0.0);
                k[(i, j)] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            }
        }
        let v = DVector::from_fn(n, |_, _| rng.gen_range(0.1..2.0));
        let Ok(rep) = check_assumptions(&r, &k, &v) else {
            continue;
        };
        if rep.all_hold() {
            return RawNetwork { r, k, v };
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
