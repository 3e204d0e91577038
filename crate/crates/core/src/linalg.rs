//! Small dense linear-algebra helpers shared by the reduction and simulation code.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_RTOL: f64 = 1e-10;

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn max_abs_vec(a: &DVector<f64>) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn cutoff(singular_values: &DVector<f64>) -> f64 {
    let smax = singular_values.iter().fold(0.0f64, |m, v| m.max(*v));
    RANK_RTOL * smax
}

/// Orthonormal basis (as columns) of the row space of `a`.
pub fn row_space_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 || max_abs(a) == 0.0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let tol = cutoff(&svd.singular_values);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    basis
}

/// Orthonormal basis of the column space of `a`.
pub fn column_space_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    row_space_basis(&a.transpose())
}

pub fn rank(a: &DMatrix<f64>) -> usize {
    row_space_basis(a).ncols()
}

/// Orthonormal basis of the orthogonal complement of span(`q`) in R^m, where `q`
/// has orthonormal columns.
///
/// Built by modified Gram-Schmidt with column pivoting applied to the projector
/// `I - q q'`: at every step the remaining projector column with the largest norm
/// is taken, lowest index first on ties. Each vector is then sign-normalized so
/// that its first entry above 1e-12 in magnitude is positive.
pub fn orthogonal_complement(q: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let k = q.ncols();
    let target = m.saturating_sub(k);
    if target == 0 {
        return DMatrix::zeros(m, 0);
    }
    let projector = DMatrix::identity(m, m) - q * q.transpose();
    let mut candidates: Vec<DVector<f64>> = (0..m).map(|j| projector.column(j).into_owned()).collect();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(target);
    let mut used = vec![false; m];
    while basis.len() < target {
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in candidates.iter().enumerate() {
            if used[j] {
                continue;
            }
            let n = c.norm();
            if best.is_none_or(|(_, bn)| n > bn * (1.0 + 1e-12)) {
                best = Some((j, n));
            }
        }
        let Some((j, norm)) = best else { break };
        if norm <= 1e-12 {
            break;
        }
        used[j] = true;
        let mut v = candidates[j].clone() / norm;
        // Re-orthogonalize against q and earlier picks to hold orthonormality to round-off.
        for _ in 0..2 {
            for b in basis.iter() {
                let c = b.dot(&v);
                v -= b * c;
            }
            if k > 0 {
                let c = q.transpose() * &v;
                v -= q * c;
            }
            v /= v.norm();
        }
        for (i, c) in candidates.iter_mut().enumerate() {
            if !used[i] {
                let proj = v.dot(c);
                *c -= &v * proj;
            }
        }
        basis.push(sign_normalize(v));
    }
    let mut out = DMatrix::zeros(m, basis.len());
    for (c, b) in basis.iter().enumerate() {
        out.set_column(c, b);
    }
    out
}

/// Flips `v` so that its first entry of magnitude above 1e-12 is positive.
pub fn sign_normalize(mut v: DVector<f64>) -> DVector<f64> {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
    v
}

/// Orthonormal basis of the null space {y : a y = 0}, one basis vector per column.
pub fn null_space_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = row_space_basis(a);
    orthogonal_complement(&rows, a.ncols())
}

/// Moore-Penrose pseudo-inverse with the relative cutoff [`RANK_RTOL`].
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 || max_abs(a) == 0.0 {
        return DMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let tol = cutoff(&svd.singular_values);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(c, r);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            out += v_t.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

/// Cholesky factor `L` with `L L' = a`; `None` when `a` is not positive definite.
pub fn cholesky_lower(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    a.clone().cholesky().map(|c| c.l())
}

pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    if a.nrows() == 0 {
        return DVector::zeros(0);
    }
    a.clone().symmetric_eigen().eigenvalues
}

pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    if a.nrows() != a.ncols() {
        return f64::INFINITY;
    }
    max_abs(&(a - a.transpose()))
}

pub fn matrix_from_rows(rows: &[Vec<f64>], ncols_if_empty: usize) -> Option<DMatrix<f64>> {
    if rows.is_empty() {
        return Some(DMatrix::zeros(0, ncols_if_empty));
    }
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect()
}

/// Sum of the Euclidean norms of the columns.
pub fn column_norm_sum(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_zero_row_spans_everything() {
        let k = DMatrix::zeros(1, 3);
        let n = null_space_basis(&k);
        assert_eq!(n.ncols(), 3);
        assert!((n.transpose() * &n - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn null_space_of_identity_is_empty() {
        assert_eq!(null_space_basis(&DMatrix::identity(4, 4)).ncols(), 0);
    }

    #[test]
    fn pinv_scalar() {
        let p = pinv(&DMatrix::from_element(1, 1, 2.0));
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn complement_is_orthonormal_and_sign_fixed() {
        let q = DMatrix::from_column_slice(2, 1, &[-0.5, 1.0]).normalize();
        let c = orthogonal_complement(&q, 2);
        assert_eq!(c.ncols(), 1);
        let expected = DVector::from_column_slice(&[2.0, 1.0]).normalize();
        assert!((c.column(0) - expected).amax() < 1e-12);
    }
}
