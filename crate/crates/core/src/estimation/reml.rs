//! Restricted likelihood for the covariance parameters `(sigma^2, theta)`.

use crate::error::{Error, Result};
use crate::kernel::{DistanceCache, KernelSpec};
use crate::linalg::Cholesky;
use crate::panel::{DesignMatrix, InputDesign};
use crate::scalar::Scalar;

use super::iwls::gls_system;
use super::CovParams;

/// Negative restricted log-likelihood with the working response and weights held fixed.
pub struct RemlObjective<'a, T: Scalar> {
    x: &'a DesignMatrix<T>,
    eta: &'a [T],
    w: &'a [T],
    cache: &'a DistanceCache<T>,
    /// `(N - m)/2 log 2π - 1/2 log |X'X|`
    constant: T,
}

impl<'a, T: Scalar> RemlObjective<'a, T> {
    pub fn new(x: &'a DesignMatrix<T>, eta: &'a [T], w: &'a [T], cache: &'a DistanceCache<T>) -> Result<Self> {
        let m = x.cols();
        let mut xtx = vec![T::zero(); m * m];
        for k in 0..x.rows() {
            let row = x.row(k);
            for a in 0..m {
                for c in 0..m {
                    xtx[a * m + c] += row[a] * row[c];
                }
            }
        }
        let chol = Cholesky::factor(xtx.clone(), m).ok_or_else(|| super::iwls::singular_error(&xtx, m, &[]))?;
        let big_n = T::lit(x.rows() as f64);
        let constant = (big_n - T::lit(m as f64)) * T::lit(0.5) * T::two_pi().ln() - T::lit(0.5) * chol.log_det();
        Ok(Self { x, eta, w, cache, constant })
    }

    /// Objective at `(sigma2, theta)`; `+inf` when a block fails to factor.
    pub fn eval(&self, sigma2: T, theta: &[T]) -> T {
        let inf = T::max_value().unwrap();
        let r = self.cache.corr(theta);
        let Some(sys) = gls_system(self.x, self.eta, self.w, sigma2, &r) else {
            return inf;
        };
        let m = self.x.cols();
        let Some(a) = Cholesky::factor(sys.xtvx.clone(), m) else {
            return inf;
        };
        let mut u = sys.xtve.clone();
        a.forward(&mut u);
        let proj = crate::scalar::dot(&u, &u);
        let half = T::lit(0.5);
        let val = self.constant + half * sys.log_det_v + half * a.log_det() + half * (sys.etve - proj);
        if val.is_finite() {
            val
        } else {
            inf
        }
    }

    /// Objective in the optimizer's coordinates `(log sigma2, log theta_1, ...)`.
    pub fn eval_log(&self, log_params: &[T]) -> T {
        let sigma2 = log_params[0].exp();
        let theta: Vec<T> = log_params[1..].iter().map(|v| v.exp()).collect();
        self.eval(sigma2, &theta)
    }
}

/// `L(omega)` for the given working response `eta_tilde` and weights `w`.
pub fn reml_negloglik<T: Scalar>(
    cov: &CovParams<T>,
    x: &DesignMatrix<T>,
    eta_tilde: &[T],
    w: &[T],
    kernel: &KernelSpec<T>,
    design: &InputDesign<T>,
) -> Result<T> {
    if cov.theta.len() != design.d() {
        return Err(Error::DimensionMismatch { expected: design.d(), got: cov.theta.len() });
    }
    if !cov.sigma2.is_finite() || cov.sigma2 < T::zero() {
        return Err(Error::InvalidParameter("sigma2 must be finite and nonnegative".into()));
    }
    let cache = DistanceCache::new(design, kernel.power);
    let obj = RemlObjective::new(x, eta_tilde, w, &cache)?;
    Ok(obj.eval(cov.sigma2, &cov.theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::iwls::working_response;
    use crate::kernel::corr_matrix;
    use crate::panel::{build_design, BinaryPanel, ModelOrder};
    use nalgebra::{DMatrix, DVector};

    fn instance(n: usize, t: usize, seed: u64) -> (InputDesign<f64>, DesignMatrix<f64>, Vec<f64>, Vec<f64>) {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let xs: Vec<f64> = (0..n * 2).map(|_| next()).collect();
        let inputs = InputDesign::new(n, 2, xs).unwrap();
        let ys: Vec<u8> = (0..n * t).map(|_| (next() < 0.5) as u8).collect();
        let panel = BinaryPanel::new(n, t, ys).unwrap();
        let dm = build_design(&inputs, &panel, ModelOrder::new(1, 0)).unwrap();
        let p: Vec<f64> = (0..dm.rows()).map(|_| 0.15 + 0.7 * next()).collect();
        let w: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
        let eta = working_response(dm.response(), &p);
        (inputs, dm, eta, w)
    }

    fn dense_oracle(inputs: &InputDesign<f64>, dm: &DesignMatrix<f64>, eta: &[f64], w: &[f64], cov: &CovParams<f64>) -> f64 {
        let k = KernelSpec::power_exponential(2.0, cov.theta.clone()).unwrap();
        let r = corr_matrix(&k, inputs).unwrap().to_dmatrix();
        let (n, nn, m) = (dm.n(), dm.rows(), dm.cols());
        let mut v = DMatrix::zeros(nn, nn);
        for b in 0..dm.blocks() {
            v.view_mut((b * n, b * n), (n, n)).copy_from(&(r.clone() * cov.sigma2));
        }
        for k in 0..nn {
            v[(k, k)] += 1.0 / w[k];
        }
        let x = dm.to_dmatrix();
        let vinv = v.clone().try_inverse().unwrap();
        let a = x.transpose() * &vinv * &x;
        let pi = &vinv - &vinv * &x * a.clone().try_inverse().unwrap() * x.transpose() * &vinv;
        let e = DVector::from_vec(eta.to_vec());
        (nn - m) as f64 / 2.0 * (2.0 * std::f64::consts::PI).ln() - 0.5 * (x.transpose() * &x).determinant().ln()
            + 0.5 * v.determinant().ln()
            + 0.5 * a.determinant().ln()
            + 0.5 * (e.transpose() * pi * &e)[(0, 0)]
    }

    #[test]
    fn matches_dense_oracle() {
        for (n, t, seed) in [(3, 4, 1u64), (4, 3, 2), (5, 4, 3)] {
            let (inputs, dm, eta, w) = instance(n, t, seed);
            let cov = CovParams { sigma2: 0.9, theta: vec![0.6, 1.9] };
            let k = KernelSpec::power_exponential(2.0, cov.theta.clone()).unwrap();
            let val = reml_negloglik(&cov, &dm, &eta, &w, &k, &inputs).unwrap();
            let oracle = dense_oracle(&inputs, &dm, &eta, &w, &cov);
            assert!((val - oracle).abs() < 1e-8, "n={n} t={t}: {val} vs {oracle}");
        }
    }

    #[test]
    fn small_variance_logdet_limit() {
        let (inputs, dm, _eta, w) = instance(4, 3, 9);
        let cache = DistanceCache::new(&inputs, 2.0);
        let r = cache.corr(&[1.0, 1.0]);
        let sys = gls_system(&dm, &vec![0.0; dm.rows()], &w, 1e-12, &r).unwrap();
        let limit: f64 = w.iter().map(|w| (1.0 / w).ln()).sum();
        assert!((sys.log_det_v - limit).abs() < 1e-8);
    }

    #[test]
    fn invariant_to_site_permutation() {
        let (inputs, _, _, _) = instance(4, 3, 4);
        let panel = BinaryPanel::from_rows(&[vec![1, 0, 1], vec![0, 0, 1], vec![1, 1, 0], vec![0, 1, 1]]).unwrap();
        let order = ModelOrder::new(1, 0);
        let dm = build_design(&inputs, &panel, order).unwrap();
        let p: Vec<f64> = (0..dm.rows()).map(|k| 0.2 + 0.05 * k as f64).collect();
        let perm = [2usize, 0, 3, 1];
        let inputs_p = inputs.select(&perm);
        let panel_p = panel.select(&perm);
        let dm_p = build_design(&inputs_p, &panel_p, order).unwrap();
        let p_p: Vec<f64> = (0..dm.rows()).map(|k| p[(k / 4) * 4 + perm[k % 4]]).collect();
        let cov = CovParams { sigma2: 1.3, theta: vec![0.4, 2.2] };
        let k = KernelSpec::power_exponential(2.0, cov.theta.clone()).unwrap();
        let f = |dm: &DesignMatrix<f64>, p: &[f64], x: &InputDesign<f64>| {
            let w: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
            let eta = working_response(dm.response(), p);
            reml_negloglik(&cov, dm, &eta, &w, &k, x).unwrap()
        };
        assert!((f(&dm, &p, &inputs) - f(&dm_p, &p_p, &inputs_p)).abs() < 1e-9);
    }
}
