//! Dense symmetric solves for the closed-form Gaussian-process posterior.
//!
//! Row-major, fixed reduction order throughout so results are
//! reproducible bit-for-bit across runs.

use crate::error::{Error, Result};

/// In-place Cholesky factorization A = L·Lᵀ of a row-major n×n matrix.
/// On success the lower triangle holds L; the strict upper triangle is
/// left untouched. Fails on a non-positive pivot.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "matrix not positive definite (pivot {diag} at {j})"
            )));
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            let (ri, rj) = (i * n, j * n);
            for k in 0..j {
                v -= a[ri + k] * a[rj + k];
            }
            a[ri + j] = v / ljj;
        }
    }
    Ok(())
}

/// Solve L·X = B in place for a lower-triangular L (from
/// [`cholesky_in_place`]); B is row-major n×m.
pub fn solve_lower(l: &[f64], n: usize, b: &mut [f64], m: usize) {
    assert_eq!(b.len(), n * m);
    for i in 0..n {
        for k in 0..i {
            let lik = l[i * n + k];
            let (head, tail) = b.split_at_mut(i * m);
            let bk = &head[k * m..(k + 1) * m];
            let bi = &mut tail[..m];
            for c in 0..m {
                bi[c] -= lik * bk[c];
            }
        }
        let inv = 1.0 / l[i * n + i];
        for c in 0..m {
            b[i * m + c] *= inv;
        }
    }
}

/// Solve Lᵀ·X = B in place.
pub fn solve_lower_transpose(l: &[f64], n: usize, b: &mut [f64], m: usize) {
    assert_eq!(b.len(), n * m);
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let lki = l[k * n + i];
            let (head, tail) = b.split_at_mut(k * m);
            let bi = &mut head[i * m..(i + 1) * m];
            let bk = &tail[..m];
            for c in 0..m {
                bi[c] -= lki * bk[c];
            }
        }
        let inv = 1.0 / l[i * n + i];
        for c in 0..m {
            b[i * m + c] *= inv;
        }
    }
}

/// Solve (L·Lᵀ)·X = B in place.
pub fn solve_cholesky(l: &[f64], n: usize, b: &mut [f64], m: usize) {
    solve_lower(l, n, b, m);
    solve_lower_transpose(l, n, b, m);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_small_system() {
        // A = [[4,2],[2,3]], b = [2, 5] → x = [-0.5, 2]
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        cholesky_in_place(&mut a, 2).unwrap();
        let mut b = vec![2.0, 5.0];
        solve_cholesky(&a, 2, &mut b, 1);
        assert!((b[0] + 0.5).abs() < 1e-12);
        assert!((b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_in_place(&mut a, 2).is_err());
    }

    #[test]
    fn multi_rhs_matches_single_rhs() {
        let mut a = vec![0.0; 16];
        // A = M·Mᵀ + I for a fixed M.
        let m = [1.0, 0.5, -0.3, 0.2, 0.0, 1.2, 0.4, -0.1, 0.7, 0.1, 0.9, 0.3, 0.2, 0.6, -0.2, 1.1];
        for i in 0..4 {
            for j in 0..4 {
                let mut v = if i == j { 1.0 } else { 0.0 };
                for k in 0..4 {
                    v += m[i * 4 + k] * m[j * 4 + k];
                }
                a[i * 4 + j] = v;
            }
        }
        let mut l = a.clone();
        cholesky_in_place(&mut l, 4).unwrap();
        let b: Vec<f64> = (0..8).map(|i| i as f64 * 0.37 - 1.0).collect();
        let mut joint = b.clone();
        solve_cholesky(&l, 4, &mut joint, 2);
        for col in 0..2 {
            let mut single: Vec<f64> = (0..4).map(|i| b[i * 2 + col]).collect();
            solve_cholesky(&l, 4, &mut single, 1);
            for i in 0..4 {
                assert!((joint[i * 2 + col] - single[i]).abs() < 1e-12);
            }
        }
    }
}
