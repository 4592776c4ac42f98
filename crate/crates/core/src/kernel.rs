//! Correlation functions between input sites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::panel::InputDesign;
use crate::scalar::Scalar;

/// Diagonal regularization added to a correlation matrix before it is factored.
pub const NUGGET: f64 = 1e-8;

/// Kernel families. New families (e.g. an orthogonal correlation) slot in as
/// additional variants with their own arm in [`KernelSpec::eval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[non_exhaustive]
pub enum KernelFamily {
    #[default]
    PowerExponential,
}

/// A correlation function: `exp{-sum_l |x_l - y_l|^p / theta_l}` for the
/// power-exponential family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KernelSpec<T> {
    pub family: KernelFamily,
    pub power: T,
    pub lengthscales: Vec<T>,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn power_exponential(power: T, lengthscales: Vec<T>) -> Result<Self> {
        let spec = Self { family: KernelFamily::PowerExponential, power, lengthscales };
        spec.validate()?;
        Ok(spec)
    }

    /// Default power `p = 2` with all lengthscales equal to 1.
    pub fn gaussian(d: usize) -> Self {
        Self { family: KernelFamily::PowerExponential, power: T::lit(2.0), lengthscales: vec![T::one(); d] }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power > T::zero() && self.power <= T::lit(2.0)) {
            return Err(Error::InvalidKernel(format!("power must lie in (0, 2], got {}", self.power.as_f64())));
        }
        if let Some(t) = self.lengthscales.iter().find(|t| !t.is_finite() || **t <= T::zero()) {
            return Err(Error::InvalidKernel(format!("lengthscales must be positive, got {}", t.as_f64())));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidKernel("at least one lengthscale is required".into()));
        }
        Ok(())
    }

    /// Same family and power with new lengthscales.
    pub fn with_lengthscales(&self, lengthscales: Vec<T>) -> Self {
        Self { family: self.family, power: self.power, lengthscales }
    }

    /// Correlation between two points; checks dimensions and parameters.
    pub fn eval(&self, xi: &[T], xj: &[T]) -> Result<T> {
        self.validate()?;
        if xi.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: xi.len() });
        }
        if xj.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: xj.len() });
        }
        Ok(self.eval_unchecked(xi, xj))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, xi: &[T], xj: &[T]) -> T {
        match self.family {
            KernelFamily::PowerExponential => {
                let two = T::lit(2.0);
                let mut s = T::zero();
                for ((a, b), th) in xi.iter().zip(xj).zip(&self.lengthscales) {
                    let dist = (*a - *b).abs();
                    let term = if self.power == two { dist * dist } else { dist.powf(self.power) };
                    s += term / *th;
                }
                (-s).exp()
            }
        }
    }
}

/// Symmetric `n x n` correlation matrix with unit diagonal (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix<T> {
    n: usize,
    data: Vec<T>,
    /// Pairs of sites at zero distance; the matrix is singular without the nugget.
    pub duplicates: Vec<(usize, usize)>,
}

impl<T: Scalar> CorrMatrix<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Copy with `NUGGET` added on the diagonal.
    pub fn regularized(&self) -> Vec<T> {
        let mut a = self.data.clone();
        let eps = T::lit(NUGGET);
        for i in 0..self.n {
            a[i * self.n + i] += eps;
        }
        a
    }

    /// Cholesky factor of `R + NUGGET * I`.
    pub fn factor(&self) -> Result<Cholesky<T>> {
        Cholesky::factor(self.regularized(), self.n).ok_or(Error::NotPositiveDefinite)
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<T> {
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

fn check_design<T: Scalar>(spec: &KernelSpec<T>, design: &InputDesign<T>) -> Result<()> {
    spec.validate()?;
    if design.d() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: design.d() });
    }
    Ok(())
}

/// Pairwise correlation matrix of the design.
pub fn corr_matrix<T: Scalar>(spec: &KernelSpec<T>, design: &InputDesign<T>) -> Result<CorrMatrix<T>> {
    check_design(spec, design)?;
    let n = design.n();
    let mut data = vec![T::zero(); n * n];
    let mut duplicates = Vec::new();
    for i in 0..n {
        data[i * n + i] = T::one();
        for j in 0..i {
            let xi = design.site(i);
            let xj = design.site(j);
            if xi == xj {
                duplicates.push((j, i));
            }
            let v = spec.eval_unchecked(xi, xj);
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    if !duplicates.is_empty() {
        log::warn!("{} duplicated input site pair(s); correlation matrix is near-singular", duplicates.len());
    }
    Ok(CorrMatrix { n, data, duplicates })
}

/// Correlations between `xnew` and every design site.
pub fn cross_corr<T: Scalar>(spec: &KernelSpec<T>, design: &InputDesign<T>, xnew: &[T]) -> Result<Vec<T>> {
    check_design(spec, design)?;
    if xnew.len() != spec.dim() {
        return Err(Error::DimensionMismatch { expected: spec.dim(), got: xnew.len() });
    }
    Ok(design.sites().map(|s| spec.eval_unchecked(xnew, s)).collect())
}

/// Per-pair powered coordinate distances `|x_il - x_jl|^p`, cached so that
/// rebuilding the correlation matrix for new lengthscales costs `O(n^2 d)`
/// multiply-adds and one `exp` per pair.
#[derive(Debug, Clone)]
pub struct DistanceCache<T> {
    n: usize,
    d: usize,
    /// lower-triangle pairs (i > j), `d` entries each
    pow_dist: Vec<T>,
    duplicates: Vec<(usize, usize)>,
}

impl<T: Scalar> DistanceCache<T> {
    pub fn new(design: &InputDesign<T>, power: T) -> Self {
        let (n, d) = (design.n(), design.d());
        let two = T::lit(2.0);
        let mut pow_dist = Vec::with_capacity(n * (n.saturating_sub(1)) / 2 * d);
        let mut duplicates = Vec::new();
        for i in 0..n {
            for j in 0..i {
                let (xi, xj) = (design.site(i), design.site(j));
                if xi == xj {
                    duplicates.push((j, i));
                }
                for l in 0..d {
                    let dist = (xi[l] - xj[l]).abs();
                    pow_dist.push(if power == two { dist * dist } else { dist.powf(power) });
                }
            }
        }
        Self { n, d, pow_dist, duplicates }
    }

    pub fn corr(&self, lengthscales: &[T]) -> CorrMatrix<T> {
        let (n, d) = (self.n, self.d);
        let inv: Vec<T> = lengthscales.iter().map(|t| T::one() / *t).collect();
        let mut data = vec![T::zero(); n * n];
        let mut k = 0;
        for i in 0..n {
            data[i * n + i] = T::one();
            for j in 0..i {
                let s = crate::scalar::dot(&self.pow_dist[k..k + d], &inv);
                k += d;
                let v = (-s).exp();
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        CorrMatrix { n, data, duplicates: self.duplicates.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loop_oracle(theta: &[f64], p: f64, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for l in 0..theta.len() {
            s += (a[l] - b[l]).abs().powf(p) / theta[l];
        }
        (-s).exp()
    }

    #[test]
    fn kernel_examples() {
        let k = KernelSpec::power_exponential(2.0f64, vec![1.0, 1.0]).unwrap();
        assert_eq!(k.eval(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 1.0);
        assert!((k.eval(&[0.0, 0.0], &[1.0, 0.0]).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        let k = KernelSpec::power_exponential(2.0, vec![0.5, 2.0]).unwrap();
        let v = k.eval(&[0.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - (-0.625f64).exp()).abs() < 1e-15);
        assert!((v - loop_oracle(&[0.5, 2.0], 2.0, &[0.0, 0.0], &[0.5, 0.5])).abs() < 1e-15);
    }

    #[test]
    fn kernel_errors() {
        let k = KernelSpec::<f64> { family: KernelFamily::PowerExponential, power: 2.0, lengthscales: vec![1.0, 0.0] };
        assert!(k.eval(&[0.0, 0.0], &[0.0, 0.0]).is_err());
        let k = KernelSpec::power_exponential(2.0f64, vec![1.0, 1.0]).unwrap();
        assert!(matches!(k.eval(&[0.0], &[0.0, 0.0]), Err(Error::DimensionMismatch { .. })));
        assert!(KernelSpec::power_exponential(2.5, vec![1.0]).is_err());
        assert!(KernelSpec::power_exponential(0.0, vec![1.0]).is_err());
    }

    #[test]
    fn corr_matrix_small_cases() {
        let k = KernelSpec::power_exponential(2.0f64, vec![1.0, 1.0]).unwrap();
        let one = InputDesign::new(1, 2, vec![0.2, 0.2]).unwrap();
        assert_eq!(corr_matrix(&k, &one).unwrap().as_slice(), &[1.0]);
        let two = InputDesign::new(2, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let r = corr_matrix(&k, &two).unwrap();
        let e = (-1.0f64).exp();
        assert_eq!(r.as_slice(), &[1.0, e, e, 1.0]);
    }

    #[test]
    fn corr_matrix_matches_double_loop_and_cache() {
        let pts = [0.11, 0.52, 0.93, 0.35, 0.27, 0.8, 0.64, 0.05, 0.49, 0.71];
        let design = InputDesign::new(5, 2, pts.to_vec()).unwrap();
        let theta = [0.3, 1.7];
        let k = KernelSpec::power_exponential(1.5, theta.to_vec()).unwrap();
        let r = corr_matrix(&k, &design).unwrap();
        let cached = DistanceCache::new(&design, 1.5).corr(&theta);
        for i in 0..5 {
            for j in 0..5 {
                let o = loop_oracle(&theta, 1.5, design.site(i), design.site(j));
                assert!((r.get(i, j) - o).abs() < 1e-12);
                assert!((cached.get(i, j) - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_corr_examples() {
        let k = KernelSpec::power_exponential(2.0, vec![0.7, 1.3]).unwrap();
        let design = InputDesign::new(3, 2, vec![0.1, 0.2, 0.5, 0.5, 0.9, 0.3]).unwrap();
        let r = cross_corr(&k, &design, &[0.1, 0.2]).unwrap();
        assert_eq!(r[0], 1.0);
        for (i, v) in r.iter().enumerate() {
            assert_eq!(*v, loop_oracle(&[0.7, 1.3], 2.0, &[0.1, 0.2], design.site(i)));
        }
        let small = KernelSpec::power_exponential(2.0, vec![0.01, 0.01]).unwrap();
        let far = cross_corr(&small, &design, &[5.0, 5.0]).unwrap();
        assert!(far.iter().all(|v| *v <= 1e-8));
        assert!(cross_corr(&k, &design, &[0.1]).is_err());
    }

    #[test]
    fn duplicates_are_flagged_and_nugget_keeps_factorization_alive() {
        let k = KernelSpec::power_exponential(2.0, vec![1.0]).unwrap();
        let design = InputDesign::new(3, 1, vec![0.5, 0.5, 0.1]).unwrap();
        let r = corr_matrix(&k, &design).unwrap();
        assert_eq!(r.duplicates, vec![(0, 1)]);
        assert!(r.factor().is_ok());
    }

    fn design_strategy() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
        (2usize..7, 1usize..4)
            .prop_flat_map(|(n, d)| (Just(n), prop::collection::vec(0.0f64..1.0, n * d), prop::collection::vec(0.05f64..3.0, d)))
    }

    proptest! {
        #[test]
        fn corr_matrix_is_symmetric_with_unit_diagonal((n, pts, theta) in design_strategy()) {
            let d = theta.len();
            let design = InputDesign::new(n, d, pts).unwrap();
            let k = KernelSpec::power_exponential(2.0, theta).unwrap();
            let r = corr_matrix(&k, &design).unwrap();
            for i in 0..n {
                prop_assert_eq!(r.get(i, i), 1.0);
                for j in 0..n {
                    prop_assert_eq!(r.get(i, j), r.get(j, i));
                    prop_assert!(r.get(i, j) > 0.0 && r.get(i, j) <= 1.0);
                }
            }
        }

        #[test]
        fn kernel_is_symmetric_and_monotone(a in prop::collection::vec(-2.0f64..2.0, 3),
                                            b in prop::collection::vec(-2.0f64..2.0, 3),
                                            bump in 0.01f64..1.0, p in 0.2f64..2.0) {
            let k = KernelSpec::power_exponential(p, vec![0.5, 1.0, 2.0]).unwrap();
            prop_assert_eq!(k.eval(&a, &b).unwrap(), k.eval(&b, &a).unwrap());
            let mut far = b.clone();
            far[1] = if b[1] >= a[1] { b[1] + bump } else { b[1] - bump };
            prop_assert!(k.eval(&a, &far).unwrap() <= k.eval(&a, &b).unwrap());
        }

        #[test]
        fn shrinking_lengthscales_lowers_off_diagonal((n, pts, theta) in design_strategy(), shrink in 0.1f64..0.9) {
            let d = theta.len();
            let design = InputDesign::new(n, d, pts).unwrap();
            let k = KernelSpec::power_exponential(2.0, theta.clone()).unwrap();
            let ks = k.with_lengthscales(theta.iter().map(|t| t * shrink).collect());
            let r = corr_matrix(&k, &design).unwrap();
            let rs = corr_matrix(&ks, &design).unwrap();
            for i in 0..n {
                for j in 0..i {
                    if design.site(i) != design.site(j) && r.get(i, j) > 1e-300 {
                        prop_assert!(rs.get(i, j) < r.get(i, j));
                    }
                }
            }
        }

        #[test]
        fn regularized_matrix_factorizes((n, pts, theta) in design_strategy()) {
            let d = theta.len();
            let design = InputDesign::new(n, d, pts).unwrap();
            let k = KernelSpec::power_exponential(2.0, theta).unwrap();
            prop_assert!(corr_matrix(&k, &design).unwrap().factor().is_ok());
        }
    }
}
