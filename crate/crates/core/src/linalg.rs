//! Dense helpers for the tiny per-tile systems (at most a few unknowns).

use num_complex::Complex64;

/// Solve `A x = b` for Hermitian positive-definite `A` (row-major, `n x n`)
/// by Cholesky factorization. Returns `None` if `A` is not numerically
/// positive definite.
pub fn solve_hpd(a: &[Complex64], b: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    // lower factor L with A = L L^H
    let mut l = vec![Complex64::default(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k].conj();
            }
            if i == j {
                if !(sum.re > 0.0) || !sum.re.is_finite() {
                    return None;
                }
                l[i * n + i] = Complex64::new(sum.re.sqrt(), 0.0);
            } else {
                l[i * n + j] = sum / l[j * n + j].re;
            }
        }
    }
    let mut y = vec![Complex64::default(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i].re;
    }
    let mut x = vec![Complex64::default(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum -= l[k * n + i].conj() * x[k];
        }
        x[i] = sum / l[i * n + i].re;
    }
    Some(x)
}

/// `y = A x` for a row-major complex `rows x cols` matrix.
pub fn matvec(a: &[Complex64], rows: usize, x: &[Complex64]) -> Vec<Complex64> {
    let cols = x.len();
    (0..rows)
        .map(|r| (0..cols).map(|c| a[r * cols + c] * x[c]).sum())
        .collect()
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}
