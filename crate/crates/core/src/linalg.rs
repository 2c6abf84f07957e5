//! Thin dense helpers over faer. Every routine runs sequentially so results
//! are bit-reproducible run to run.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Accum, ColMut, ColRef, Mat, MatMut, MatRef, Par, Side};

use crate::error::{Error, Result};

pub(crate) const PAR: Par = Par::Seq;

/// Lower Cholesky factor of `a + jitter I`, or `None` if a pivot is not positive.
pub fn cholesky_lower(a: MatRef<'_, f64>, jitter: f64) -> Option<Mat<f64>> {
    let n = a.nrows();
    let mut l = Mat::<f64>::zeros(n, n);
    l.copy_from_triangular_lower(a);
    for i in 0..n {
        l[(i, i)] += jitter;
    }
    let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(n, PAR, Default::default()));
    let stack = MemStack::new(&mut mem);
    cholesky_in_place(l.as_mut(), Default::default(), PAR, stack, Default::default()).ok()?;
    // the factorization leaves the strict upper triangle untouched
    for j in 0..n {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    if (0..n).any(|i| !l[(i, i)].is_finite()) {
        return None;
    }
    Some(l)
}

/// Jittered Cholesky with the escalation policy `base * 10^k`, where
/// `base = 1e-10 * trace / dim` and the last attempt is `1e-4 * trace / dim`.
pub fn jittered_cholesky(a: MatRef<'_, f64>) -> Result<(Mat<f64>, f64)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Mat::zeros(0, 0), 0.0));
    }
    let mean_diag = (0..n).map(|i| a[(i, i)]).sum::<f64>() / n as f64;
    let unit = if mean_diag > 0.0 && mean_diag.is_finite() {
        mean_diag
    } else {
        1.0
    };
    let mut jitter = 0.0;
    for k in 0..=6 {
        jitter = 1e-10 * unit * 10f64.powi(k);
        if let Some(l) = cholesky_lower(a, jitter) {
            return Ok((l, jitter));
        }
        log::debug!("cholesky of dim {n} failed at jitter {jitter:e}");
    }
    Err(Error::Factorization {
        dim: n,
        jitter,
        min_eigenvalue: min_eigenvalue(a),
    })
}

pub fn min_eigenvalue(a: MatRef<'_, f64>) -> f64 {
    a.self_adjoint_eigenvalues(Side::Lower)
        .ok()
        .and_then(|ev| ev.first().copied())
        .unwrap_or(f64::NAN)
}

/// Solves `L x = b` in place.
pub fn solve_lower(l: MatRef<'_, f64>, b: &mut [f64]) {
    let col = ColMut::from_slice_mut(b);
    solve_lower_triangular_in_place(l, col.as_mat_mut(), PAR);
}

/// Solves `L^T x = b` in place.
pub fn solve_lower_transpose(l: MatRef<'_, f64>, b: &mut [f64]) {
    let col = ColMut::from_slice_mut(b);
    solve_upper_triangular_in_place(l.transpose(), col.as_mat_mut(), PAR);
}

/// Solves `L L^T x = b` in place.
pub fn chol_solve(l: MatRef<'_, f64>, b: &mut [f64]) {
    solve_lower(l, b);
    solve_lower_transpose(l, b);
}

/// Solves `L L^T X = B` in place, column by column.
pub fn chol_solve_mat(l: MatRef<'_, f64>, mut b: MatMut<'_, f64>) {
    solve_lower_triangular_in_place(l, b.as_mut(), PAR);
    solve_upper_triangular_in_place(l.transpose(), b.as_mut(), PAR);
}

/// `y = A x`.
pub fn mat_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    mat_vec_into(a, x, &mut y);
    y
}

pub fn mat_vec_into(a: MatRef<'_, f64>, x: &[f64], y: &mut [f64]) {
    let xc = ColRef::from_slice(x);
    let yc = ColMut::from_slice_mut(y);
    matmul(yc.as_mat_mut(), Accum::Replace, a, xc.as_mat(), 1.0, PAR);
}

/// `y = A^T x`.
pub fn mat_t_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    mat_vec(a.transpose(), x)
}

/// `A B^T`.
pub fn mul_abt(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(a.nrows(), b.nrows());
    matmul(out.as_mut(), Accum::Replace, a, b.transpose(), 1.0, PAR);
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Relative Frobenius error of `L L^T` against `a + jitter I`.
pub fn reconstruction_error(a: MatRef<'_, f64>, l: MatRef<'_, f64>, jitter: f64) -> f64 {
    let llt = mul_abt(l, l);
    let n = a.nrows();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..n {
        for i in 0..n {
            let target = a[(i, j)] + if i == j { jitter } else { 0.0 };
            num += (llt[(i, j)] - target).powi(2);
            den += target * target;
        }
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_escalates_on_singular_matrix() {
        let a = Mat::<f64>::from_fn(2, 2, |_, _| 1.0);
        let (l, jitter) = jittered_cholesky(a.as_ref()).unwrap();
        assert!(jitter > 0.0);
        assert!(reconstruction_error(a.as_ref(), l.as_ref(), jitter) < 1e-10);
    }

    #[test]
    fn indefinite_matrix_fails_with_eigenvalue() {
        let a = Mat::<f64>::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 2.0 });
        match jittered_cholesky(a.as_ref()) {
            Err(Error::Factorization { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn triangular_solves_roundtrip() {
        let a = Mat::<f64>::from_fn(4, 4, |i, j| if i == j { 4.0 } else { 1.0 / (1 + i + j) as f64 });
        let l = cholesky_lower(a.as_ref(), 0.0).unwrap();
        let w = vec![0.3, -1.0, 2.0, 0.5];
        let z = mat_vec(l.as_ref(), &w);
        let mut back = z.clone();
        solve_lower(l.as_ref(), &mut back);
        for (x, y) in back.iter().zip(&w) {
            assert!((x - y).abs() < 1e-14);
        }
        let mut t = z.clone();
        solve_lower_transpose(l.as_ref(), &mut t);
        let check = mat_t_vec(l.as_ref(), &t);
        for (x, y) in check.iter().zip(&z) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
