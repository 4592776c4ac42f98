//! Dense symmetric positive-definite kernels used on the per-time blocks.
//!
//! Matrices here are square, row-major `Vec<T>`s. Only the lower triangle of
//! the factor is meaningful.

use crate::scalar::{dot, Scalar};

/// Lower Cholesky factor `A = L L'` stored row-major.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factors the symmetric matrix `a` (row-major, `n x n`, lower triangle read).
    /// Returns `None` if a pivot is not strictly positive.
    pub fn factor(mut a: Vec<T>, n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        for i in 0..n {
            let (done, rest) = a.split_at_mut(i * n);
            let row_i = &mut rest[..n];
            for j in 0..i {
                let row_j = &done[j * n..j * n + j];
                let s = row_i[j] - dot(&row_i[..j], row_j);
                row_i[j] = s / done[j * n + j];
            }
            let s = row_i[i] - dot(&row_i[..i], &row_i[..i]);
            if !s.is_finite() || s <= T::zero() {
                return None;
            }
            row_i[i] = s.sqrt();
            for v in &mut row_i[i + 1..] {
                *v = T::zero();
            }
        }
        Some(Self { n, l: a })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.l[i * self.n + j]
    }

    /// `log |A|`.
    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        (0..self.n).fold(T::zero(), |acc, i| acc + two * self.at(i, i).ln())
    }

    /// Solves `L x = b` in place.
    pub fn forward(&self, b: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            b[i] = (b[i] - dot(row, &b[..i])) / self.l[i * n + i];
        }
    }

    /// Solves `L' x = b` in place.
    pub fn backward(&self, b: &mut [T]) {
        let n = self.n;
        for i in (0..n).rev() {
            b[i] /= self.l[i * n + i];
            let xi = b[i];
            let row = &self.l[i * n..i * n + i];
            for (bj, lij) in b[..i].iter_mut().zip(row) {
                *bj -= *lij * xi;
            }
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        self.forward(b);
        self.backward(b);
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `L Y = B` for a row-major `n x k` right-hand side, in place.
    pub fn forward_multi(&self, b: &mut [T], k: usize) {
        let n = self.n;
        assert_eq!(b.len(), n * k);
        for i in 0..n {
            let (done, rest) = b.split_at_mut(i * k);
            let row_b = &mut rest[..k];
            for j in 0..i {
                let lij = self.l[i * n + j];
                if lij != T::zero() {
                    let row_j = &done[j * k..j * k + k];
                    for (bi, bj) in row_b.iter_mut().zip(row_j) {
                        *bi -= lij * *bj;
                    }
                }
            }
            let d = self.l[i * n + i];
            for bi in row_b.iter_mut() {
                *bi /= d;
            }
        }
    }

    /// Full inverse `A^{-1}` (row-major).
    pub fn inverse(&self) -> Vec<T> {
        let n = self.n;
        let mut inv = vec![T::zero(); n * n];
        let mut col = vec![T::zero(); n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = T::zero());
            col[j] = T::one();
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        // symmetrize against round-off
        for i in 0..n {
            for j in 0..i {
                let s = (inv[i * n + j] + inv[j * n + i]) * T::lit(0.5);
                inv[i * n + j] = s;
                inv[j * n + i] = s;
            }
        }
        inv
    }
}

/// Returns the indices of columns of the symmetric PSD matrix `a` (`m x m`,
/// row-major) that are numerically linear combinations of earlier columns.
///
/// Uses a Cholesky sweep that skips pivots below `rel_tol * max(diag)`.
pub fn deficient_columns<T: Scalar>(a: &[T], m: usize, rel_tol: T) -> Vec<usize> {
    let scale = (0..m).fold(T::zero(), |acc, i| acc.max(a[i * m + i].abs()));
    let tol = rel_tol * scale;
    let mut l = vec![T::zero(); m * m];
    let mut keep = vec![false; m];
    let mut bad = Vec::new();
    for i in 0..m {
        for j in 0..i {
            if !keep[j] {
                continue;
            }
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = s / l[j * m + j];
        }
        let mut s = a[i * m + i];
        for k in 0..i {
            s -= l[i * m + k] * l[i * m + k];
        }
        if s > tol && s.is_finite() {
            l[i * m + i] = s.sqrt();
            keep[i] = true;
        } else {
            for k in 0..i {
                l[i * m + k] = T::zero();
            }
            bad.push(i);
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn spd(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (-((i as f64 - j as f64).powi(2)) / 3.0).exp();
            }
            a[i * n + i] += 0.5;
        }
        a
    }

    #[test]
    fn factor_solve_and_logdet_match_nalgebra() {
        let n = 7;
        let a = spd(n);
        let ch = Cholesky::factor(a.clone(), n).unwrap();
        let dm = DMatrix::from_row_slice(n, n, &a);
        let nch = dm.clone().cholesky().unwrap();
        let ld: f64 = 2.0 * nch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        assert!((ch.log_det() - ld).abs() < 1e-12);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = ch.solve(&b);
        let xr = nch.solve(&nalgebra::DVector::from_vec(b.clone()));
        for i in 0..n {
            assert!((x[i] - xr[i]).abs() < 1e-12);
        }
        let inv = ch.inverse();
        let prod = dm * DMatrix::from_row_slice(n, n, &inv);
        assert!((prod - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
    }

    #[test]
    fn forward_multi_matches_single() {
        let n = 5;
        let ch = Cholesky::factor(spd(n), n).unwrap();
        let k = 3;
        let b: Vec<f64> = (0..n * k).map(|i| (i as f64 * 0.37).cos()).collect();
        let mut multi = b.clone();
        ch.forward_multi(&mut multi, k);
        for c in 0..k {
            let mut col: Vec<f64> = (0..n).map(|i| b[i * k + c]).collect();
            ch.forward(&mut col);
            for i in 0..n {
                assert!((col[i] - multi[i * k + c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        assert!(Cholesky::factor(vec![1.0, 2.0, 2.0, 1.0], 2).is_none());
    }

    #[test]
    fn finds_collinear_column() {
        // columns: 1, x, 2x
        let xs = [0.1, 0.4, 0.9, 1.3];
        let cols: Vec<[f64; 3]> = xs.iter().map(|&x| [1.0, x, 2.0 * x]).collect();
        let mut g = vec![0.0; 9];
        for r in &cols {
            for i in 0..3 {
                for j in 0..3 {
                    g[i * 3 + j] += r[i] * r[j];
                }
            }
        }
        assert_eq!(deficient_columns(&g, 3, 1e-10), vec![2]);
    }
}
