//! Inner IWLS step of the penalized quasi-partial-likelihood fit.
//!
//! `V = W^{-1} + sigma^2 (R ⊗ time blocks)` is block diagonal over time, so
//! every product with `V^{-1}` is done one `n x n` block at a time.

use crate::error::{Error, Result};
use crate::kernel::CorrMatrix;
use crate::linalg::{deficient_columns, Cholesky};
use crate::panel::DesignMatrix;
use crate::scalar::{dot, logit, Scalar};

use super::CovParams;

/// Working response `log(p/(1-p)) + (y - p) / (p(1-p))`.
pub fn working_response<T: Scalar>(y: &[u8], p: &[T]) -> Vec<T> {
    y.iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let yi = T::lit(yi as f64);
            logit(pi) + (yi - pi) / (pi * (T::one() - pi))
        })
        .collect()
}

/// Factor of one time block `diag(1/w) + sigma2 * R`.
pub(crate) fn block_factor<T: Scalar>(r: &CorrMatrix<T>, sigma2: T, w: &[T]) -> Option<Cholesky<T>> {
    let n = r.n();
    let mut a: Vec<T> = r.as_slice().iter().map(|v| *v * sigma2).collect();
    for i in 0..n {
        a[i * n + i] += T::one() / w[i];
    }
    Cholesky::factor(a, n)
}

/// Generalized least-squares pieces accumulated over blocks.
pub(crate) struct GlsSystem<T> {
    pub factors: Vec<Cholesky<T>>,
    /// `X' V^{-1} X`, `m x m` row-major
    pub xtvx: Vec<T>,
    /// `X' V^{-1} eta`
    pub xtve: Vec<T>,
    /// `eta' V^{-1} eta`
    pub etve: T,
    /// `log |V|`
    pub log_det_v: T,
}

pub(crate) fn gls_system<T: Scalar>(x: &DesignMatrix<T>, eta: &[T], w: &[T], sigma2: T, r: &CorrMatrix<T>) -> Option<GlsSystem<T>> {
    let (n, m) = (x.n(), x.cols());
    let k = m + 1;
    let mut xtvx = vec![T::zero(); m * m];
    let mut xtve = vec![T::zero(); m];
    let mut etve = T::zero();
    let mut log_det_v = T::zero();
    let mut factors = Vec::with_capacity(x.blocks());
    let mut rhs = vec![T::zero(); n * k];
    for b in 0..x.blocks() {
        let rows = b * n..(b + 1) * n;
        let chol = block_factor(r, sigma2, &w[rows.clone()])?;
        log_det_v += chol.log_det();
        let xb = x.block(b);
        for i in 0..n {
            rhs[i * k..i * k + m].copy_from_slice(&xb[i * m..(i + 1) * m]);
            rhs[i * k + m] = eta[rows.start + i];
        }
        chol.forward_multi(&mut rhs, k);
        for row in rhs.chunks_exact(k) {
            let e = row[m];
            etve += e * e;
            for a in 0..m {
                let ra = row[a];
                xtve[a] += ra * e;
                for c in 0..=a {
                    xtvx[a * m + c] += ra * row[c];
                }
            }
        }
        factors.push(chol);
    }
    for a in 0..m {
        for c in 0..a {
            xtvx[c * m + a] = xtvx[a * m + c];
        }
    }
    if !log_det_v.is_finite() || !etve.is_finite() {
        return None;
    }
    Some(GlsSystem { factors, xtvx, xtve, etve, log_det_v })
}

/// Solution of one IWLS step.
#[derive(Debug, Clone)]
pub struct IwlsSolution<T> {
    /// Fixed effects in model-matrix column order.
    pub beta: Vec<T>,
    /// Random-effect predictions, one per model row.
    pub z: Vec<T>,
}

pub(crate) fn singular_error<T: Scalar>(a: &[T], m: usize, names: &[String]) -> Error {
    let cols = deficient_columns(a, m, T::lit(1e-10));
    let columns = if cols.is_empty() {
        vec!["<numerically singular>".to_string()]
    } else {
        cols.iter().map(|&c| names.get(c).cloned().unwrap_or_else(|| format!("column {}", c + 1))).collect()
    };
    Error::Singular { columns }
}

/// Solves `(X'V^{-1}X) beta = X'V^{-1} eta` and sets
/// `Z = sigma^2 R V^{-1} (eta - X beta)` blockwise.
///
/// `names` labels the columns for error reporting (may be empty).
pub fn iwls_step<T: Scalar>(
    x: &DesignMatrix<T>,
    eta_tilde: &[T],
    w: &[T],
    cov: &CovParams<T>,
    r: &CorrMatrix<T>,
    names: &[String],
) -> Result<IwlsSolution<T>> {
    let (n, m) = (x.n(), x.cols());
    if eta_tilde.len() != x.rows() || w.len() != x.rows() {
        return Err(Error::DimensionMismatch { expected: x.rows(), got: eta_tilde.len().min(w.len()) });
    }
    if r.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: r.n() });
    }
    let sys = gls_system(x, eta_tilde, w, cov.sigma2, r).ok_or(Error::NotPositiveDefinite)?;
    let a = Cholesky::factor(sys.xtvx.clone(), m);
    let beta = match a {
        Some(ch) if deficient_columns(&sys.xtvx, m, T::lit(1e-12)).is_empty() => ch.solve(&sys.xtve),
        _ => return Err(singular_error(&sys.xtvx, m, names)),
    };

    let mut z = vec![T::zero(); x.rows()];
    let mut resid = vec![T::zero(); n];
    for (b, chol) in sys.factors.iter().enumerate() {
        let xb = x.block(b);
        for i in 0..n {
            resid[i] = eta_tilde[b * n + i] - dot(&xb[i * m..(i + 1) * m], &beta);
        }
        chol.solve_in_place(&mut resid);
        let rs = r.as_slice();
        for i in 0..n {
            z[b * n + i] = cov.sigma2 * dot(&rs[i * n..(i + 1) * n], &resid);
        }
    }
    Ok(IwlsSolution { beta, z })
}
