//! Sparse SPD solvers for the potential system.

use crate::error::{Error, Result};
use crate::par;

/// Cholesky factor of a symmetric positive-definite band matrix.
///
/// Row `i` stores `L(i, i - bw ..= i)` at offsets `0..=bw`; entries left of
/// column 0 are zero.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// Factors the matrix whose lower band entries are given by
    /// `entry(i, c)` for `i - bw <= c <= i`.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let k0 = lo.max(j.saturating_sub(bw));
                let (ri, rj) = (i * w, j * w);
                let dot: f64 = (k0..j)
                    .map(|k| l[ri + k + bw - i] * l[rj + k + bw - j])
                    .sum();
                let a = entry(i, j) - dot;
                if i == j {
                    if !(a > 0.0) {
                        return Err(Error::Domain(format!("matrix not positive definite at row {i}")));
                    }
                    l[ri + bw] = a.sqrt();
                } else {
                    l[ri + j + bw - i] = a / l[rj + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Solves `L L^T x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (bw, w) = (self.bw, self.bw + 1);
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            let row = &self.l[i * w..(i + 1) * w];
            let dot: f64 = row[lo + bw - i..bw].iter().zip(&x[lo..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - dot) / row[bw];
        }
        for i in (0..self.n).rev() {
            let row = &self.l[i * w..(i + 1) * w];
            x[i] /= row[bw];
            let xi = x[i];
            let lo = i.saturating_sub(bw);
            for (xk, a) in x[lo..i].iter_mut().zip(&row[lo + bw - i..bw]) {
                *xk -= a * xi;
            }
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for `A x = b`, starting from the
/// contents of `x`. Converged when `|b - A x| <= tol |b|`.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    inv_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    let n = b.len();
    let b_norm = par::dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    par::update_indexed(&mut r, |i, v| *v = b[i] - *v);
    let mut z = vec![0.0; n];
    par::fill_indexed(&mut z, |i| inv_diag[i] * r[i]);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = par::dot(&r, &z);
    let mut res = par::dot(&r, &r).sqrt() / b_norm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgReport { iterations: it, relative_residual: res });
        }
        apply(&p, &mut ap);
        let pap = par::dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        par::update_indexed(x, |i, v| *v += alpha * p[i]);
        par::update_indexed(&mut r, |i, v| *v -= alpha * ap[i]);
        par::fill_indexed(&mut z, |i| inv_diag[i] * r[i]);
        let rz_next = par::dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        par::update_indexed(&mut p, |i, v| *v = z[i] + beta * *v);
        res = par::dot(&r, &r).sqrt() / b_norm;
    }
    if res <= tol {
        return Ok(CgReport { iterations: max_iter, relative_residual: res });
    }
    Err(Error::NoConvergence { solver: "conjugate gradient", iterations: max_iter, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;

    // 1D Laplacian plus identity, dense oracle via Gaussian elimination.
    fn tridiag(n: usize) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 3.0;
            if i > 0 {
                a[i][i - 1] = -1.0;
                a[i - 1][i] = -1.0;
            }
            if i > 2 {
                a[i][i - 3] = -0.5;
                a[i - 3][i] = -0.5;
            }
        }
        a
    }

    #[allow(clippy::needless_range_loop)]
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn band_cholesky_matches_dense_elimination() {
        let n = 12;
        let a = tridiag(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let chol = BandCholesky::factor(n, 3, |i, c| a[i][c]).unwrap();
        let mut x = b.clone();
        chol.solve_in_place(&mut x);
        let want = dense_solve(a, b);
        for (p, q) in x.iter().zip(&want) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn pcg_matches_dense_and_reports_failure() {
        let n = 12;
        let a = tridiag(n);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                y[i] = (0..n).map(|k| a[i][k] * x[k]).sum();
            }
        };
        let inv: Vec<f64> = (0..n).map(|i| 1.0 / a[i][i]).collect();
        let mut x = vec![0.0; n];
        let rep = pcg(apply, &inv, &b, &mut x, 1e-12, 100).unwrap();
        assert!(rep.relative_residual <= 1e-12);
        let want = dense_solve(a.clone(), b.clone());
        for (p, q) in x.iter().zip(&want) {
            assert!((p - q).abs() < 1e-10);
        }
        let mut y = vec![0.0; n];
        let err = pcg(apply, &inv, &b, &mut y, 1e-14, 1).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 1, .. }));
    }

    #[test]
    fn indefinite_band_is_rejected() {
        assert!(BandCholesky::factor(3, 1, |i, c| if i == c { -1.0 } else { 0.0 }).is_err());
    }
}
