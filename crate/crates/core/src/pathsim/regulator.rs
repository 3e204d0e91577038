//! Discrete two-sided Skorokhod map on `[lo, hi]`.

use crate::error::{Error, Result};

/// One step: returns `(W_{k+1}, ΔL1, ΔL2)` for `raw = W_k + Δχ`.
#[inline]
pub fn regulate_step(w: f64, dchi: f64, lo: f64, hi: f64) -> (f64, f64, f64) {
    let raw = w + dchi;
    let dl1 = (lo - raw).max(0.0);
    let dl2 = (raw - hi).max(0.0);
    (raw + dl1 - dl2, dl1, dl2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regulated {
    pub w: Vec<f64>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
}

/// `W = w_start + (χ - χ(0)) + L1 - L2` kept in `[lo, hi]`; `L1` grows only
/// at `lo` and `L2` only at `hi`.
pub fn two_sided_regulator(chi: &[f64], lo: f64, hi: f64, w_start: f64) -> Result<Regulated> {
    if !(lo < hi) {
        return Err(Error::InvalidInput(format!(
            "regulator needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(lo..=hi).contains(&w_start) {
        return Err(Error::InvalidInput(format!("start {w_start} outside [{lo}, {hi}]")));
    }
    let n = chi.len();
    let mut out = Regulated {
        w: Vec::with_capacity(n),
        l1: Vec::with_capacity(n),
        l2: Vec::with_capacity(n),
    };
    if n == 0 {
        return Ok(out);
    }
    let (mut w, mut l1, mut l2) = (w_start, 0.0, 0.0);
    out.w.push(w);
    out.l1.push(l1);
    out.l2.push(l2);
    for k in 1..n {
        let (next, d1, d2) = regulate_step(w, chi[k] - chi[k - 1], lo, hi);
        w = next;
        l1 += d1;
        l2 += d2;
        out.w.push(w);
        out.l1.push(l1);
        out.l2.push(l2);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_path_is_untouched() {
        let chi = [0.5, 0.6, 0.4, 0.55];
        let r = two_sided_regulator(&chi, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(r.l1, vec![0.0; 4]);
        assert_eq!(r.l2, vec![0.0; 4]);
        for (w, c) in r.w.iter().zip(chi) {
            assert!((w - c).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_descent_sticks_at_zero() {
        let dt = 1e-3;
        let n = 1001;
        let chi: Vec<f64> = (0..n).map(|k| -(k as f64) * dt).collect();
        let r = two_sided_regulator(&chi, 0.0, 1.0, 0.5).unwrap();
        for k in 0..n {
            let t = k as f64 * dt;
            assert!((r.l1[k] - (t - 0.5).max(0.0)).abs() < 1e-9);
            assert!(r.w[k] >= 0.0 && r.w[k] <= 1.0);
        }
        assert_eq!(r.w[n - 1], 0.0);
    }

    #[test]
    fn ascent_from_top_pushes_l2() {
        let dt = 1e-2;
        let chi: Vec<f64> = (0..101).map(|k| k as f64 * dt).collect();
        let r = two_sided_regulator(&chi, 0.0, 1.0, 1.0).unwrap();
        assert!(r.w.iter().all(|w| *w == 1.0));
        assert!((r.l2[100] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_interval_rejected() {
        assert!(two_sided_regulator(&[0.0], 1.0, 1.0, 1.0).is_err());
    }
}
