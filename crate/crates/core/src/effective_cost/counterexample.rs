//! A quasiconvex `g` on `|z1|, |z2| <= 2` whose minimizer on the line `z1 = w`
//! jumps from near `(1, 1)` to near `(1, -1)` as `w` crosses 1, while the
//! minimum value stays continuous.
//!
//! The level-`r` curve is the boundary traced by the segments
//! `z2 = r` (top), `z1 = -r` (left), `z2 = -r` (bottom) and the slant from
//! `(r², -r)` to `(r, r)`; `g(z)` is the `r` whose curve passes through `z`.

use crate::error::{Error, Result};

const BISECT_TOL: f64 = 1e-12;
const GOLDEN_TOL: f64 = 1e-10;

/// `z1` on the slant segment of level `r` at height `z2`, for `r >= |z2|`.
fn slant_z1(r: f64, z2: f64) -> f64 {
    r * r + (z2 + r) * (1.0 - r) / 2.0
}

/// The level `r >= 0` of the curve through `z`.
pub fn quasiconvex_level_eval(z: [f64; 2]) -> f64 {
    let [z1, z2] = z;
    let floor = z2.abs().max(-z1).max(0.0);
    if slant_z1(floor, z2) >= z1 {
        return floor;
    }
    // slant_z1 is increasing in r for r >= |z2| and exceeds z1 at the upper end
    let (mut lo, mut hi) = (floor, z2.abs() + z1.abs() + 1.0);
    debug_assert!(slant_z1(hi, z2) >= z1);
    while hi - lo > BISECT_TOL * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if slant_z1(mid, z2) < z1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub w: f64,
    pub argmin_z2: f64,
    pub value: f64,
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Minimizes the level function over `z2` on the line `z1 = w` for each `w`:
/// a scan of `z2_grid` followed by golden-section refinement between the
/// neighbours of the best grid point. Ties keep the lowest `z2`.
pub fn discontinuity_probe(w_grid: &[f64], z2_grid: &[f64]) -> Result<Vec<ProbeRow>> {
    if let Some(w) = w_grid.iter().find(|w| !(0.0..=2.0).contains(*w)) {
        return Err(Error::InvalidInput(format!("w = {w} outside [0, 2]")));
    }
    if z2_grid.is_empty() || z2_grid.iter().any(|z| !(-2.0..=2.0).contains(z)) {
        return Err(Error::InvalidInput(
            "z2 grid must be nonempty and inside [-2, 2]".into(),
        ));
    }
    Ok(w_grid
        .iter()
        .map(|&w| {
            let f = |z2: f64| quasiconvex_level_eval([w, z2]);
            let (mut best_i, mut best) = (0, f(z2_grid[0]));
            for (i, &z2) in z2_grid.iter().enumerate().skip(1) {
                let v = f(z2);
                if v < best {
                    best = v;
                    best_i = i;
                }
            }
            let a = z2_grid[best_i.saturating_sub(1)];
            let b = z2_grid[(best_i + 1).min(z2_grid.len() - 1)];
            let (x, fx) = golden_min(f, a.min(b), a.max(b));
            if fx < best {
                ProbeRow {
                    w,
                    argmin_z2: x,
                    value: fx,
                }
            } else {
                ProbeRow {
                    w,
                    argmin_z2: z2_grid[best_i],
                    value: best,
                }
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn level_values_on_segments() {
        assert_eq!(quasiconvex_level_eval([0.0, 0.0]), 0.0);
        assert!((quasiconvex_level_eval([1.0, 1.0]) - 1.0).abs() < 1e-12);
        assert!((quasiconvex_level_eval([4.0, -2.0]) - 2.0).abs() < 1e-12);
        assert!((quasiconvex_level_eval([-1.5, 0.3]) - 1.5).abs() < 1e-12);
        assert!((quasiconvex_level_eval([0.5, -1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slant_root_matches_quadratic_formula() {
        for (z1, z2) in [(1.0f64, 0.0f64), (1.7, 0.2), (3.0, -1.0), (0.9, 0.5)] {
            // r² + (1 - z2) r + (z2 - 2 z1) = 0 after clearing the slant equation
            let b = 1.0 - z2;
            let root = (-b + (b * b - 4.0 * (z2 - 2.0 * z1)).sqrt()) / 2.0;
            if root >= z2.abs() {
                assert!((quasiconvex_level_eval([z1, z2]) - root).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn probe_examples() {
        let z2 = uniform(-2.0, 2.0, 801);
        let rows = discontinuity_probe(&[0.5, 1.21], &z2).unwrap();
        assert!((rows[0].argmin_z2 - 0.5).abs() < 1e-3 && (rows[0].value - 0.5).abs() < 1e-6);
        assert!((rows[1].argmin_z2 + 1.1).abs() < 1e-3 && (rows[1].value - 1.1).abs() < 1e-6);
        assert!(discontinuity_probe(&[4.0], &z2).is_err());
    }
}
