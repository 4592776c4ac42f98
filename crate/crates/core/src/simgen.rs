//! Synthetic panels: draws from the full model on a regular grid, the
//! modified Friedman benchmark, and a one-dimensional demo curve.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{Coefficients, CovParams};
use crate::kernel::{corr_matrix, KernelSpec};
use crate::panel::{BinaryPanel, InputDesign, ModelOrder, ProbPanel};
use crate::scalar::{logistic, Scalar};
use crate::seed::{rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    GpModel,
    Friedman,
    Custom1D,
}

/// Description of a data-generating truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TruthSpec<T> {
    pub generator: Generator,
    pub order: ModelOrder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Coefficients<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<CovParams<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec<T>>,
    /// Points per axis of the regular grid sites are drawn from.
    pub grid_levels: usize,
    pub seed: u64,
}

impl<T: Scalar> TruthSpec<T> {
    /// The five-input AR(1) reference truth with a Gaussian kernel.
    pub fn reference_gp(seed: u64) -> Self {
        let lit = |v: &[f64]| v.iter().map(|x| T::lit(*x)).collect::<Vec<_>>();
        let theta = lit(&[0.5, 1.0, 1.5, 2.0, 2.5]);
        Self {
            generator: Generator::GpModel,
            order: ModelOrder::new(1, 0),
            coefficients: Some(Coefficients {
                phi: lit(&[0.8]),
                alpha0: T::lit(0.5),
                alpha: lit(&[-3.0, 2.0, -2.0, 1.0, 0.5]),
                gamma: vec![],
            }),
            cov: Some(CovParams { sigma2: T::one(), theta: theta.clone() }),
            kernel: Some(KernelSpec::power_exponential(T::lit(2.0), theta).expect("valid kernel")),
            grid_levels: 4,
            seed,
        }
    }

    pub fn friedman(seed: u64) -> Self {
        Self {
            generator: Generator::Friedman,
            order: ModelOrder::new(1, 0),
            coefficients: None,
            cov: None,
            kernel: None,
            grid_levels: 0,
            seed,
        }
    }

    pub fn demo_1d(seed: u64) -> Self {
        Self {
            generator: Generator::Custom1D,
            order: ModelOrder::default(),
            coefficients: None,
            cov: None,
            kernel: None,
            grid_levels: 0,
            seed,
        }
    }

    fn gp_parts(&self) -> Result<(&Coefficients<T>, &CovParams<T>, KernelSpec<T>)> {
        let missing = || Error::InvalidParameter("model truth needs coefficients, covariance parameters and a kernel".into());
        let c = self.coefficients.as_ref().ok_or_else(missing)?;
        let cov = self.cov.as_ref().ok_or_else(missing)?;
        let k = self.kernel.as_ref().ok_or_else(missing)?;
        if c.phi.len() != self.order.r || c.gamma.len() != self.order.l || c.gamma.iter().any(|g| g.len() != c.alpha.len()) {
            return Err(Error::InvalidParameter("coefficient shapes disagree with the model order".into()));
        }
        if cov.theta.len() != c.alpha.len() {
            return Err(Error::DimensionMismatch { expected: c.alpha.len(), got: cov.theta.len() });
        }
        let k = k.with_lengthscales(cov.theta.clone());
        k.validate()?;
        Ok((c, cov, k))
    }
}

/// Inputs, responses and the probabilities that generated them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SimulatedPanel<T> {
    pub inputs: InputDesign<T>,
    pub panel: BinaryPanel,
    pub p: ProbPanel<T>,
}

impl<T: Scalar> SimulatedPanel<T> {
    pub fn select(&self, idx: &[usize]) -> Self {
        Self { inputs: self.inputs.select(idx), panel: self.panel.select(idx), p: self.p.select(idx) }
    }

    /// First `n_train` sites and the rest.
    pub fn split(&self, n_train: usize) -> (Self, Self) {
        let n = self.inputs.n();
        let a: Vec<usize> = (0..n_train).collect();
        let b: Vec<usize> = (n_train..n).collect();
        (self.select(&a), self.select(&b))
    }
}

fn grid_point<T: Scalar>(mut k: usize, levels: usize, d: usize) -> Vec<T> {
    let step = T::one() / T::lit((levels - 1).max(1) as f64);
    let mut x = vec![T::zero(); d];
    for v in x.iter_mut() {
        *v = T::lit((k % levels) as f64) * step;
        k /= levels;
    }
    x
}

/// Runs the autoregressive recursion forward given a logit offset
/// `offset(i, t)` (everything except the lagged-response terms).
fn recurse<T: Scalar, R: Rng>(
    n: usize,
    t_len: usize,
    rng: &mut R,
    mut logit: impl FnMut(usize, usize, &dyn Fn(usize) -> u8, &mut R) -> T,
) -> Result<(BinaryPanel, ProbPanel<T>)> {
    let mut y = vec![0u8; n * t_len];
    let mut p = vec![T::zero(); n * t_len];
    for t in 1..=t_len {
        for i in 0..n {
            let series = &y[i * t_len..(i + 1) * t_len];
            let lagged = |k: usize| if k < t { series[t - k - 1] } else { 0 };
            let eta = logit(i, t, &lagged, rng);
            let pt = logistic(eta);
            p[i * t_len + t - 1] = pt;
            y[i * t_len + t - 1] = (T::lit(rng.random::<f64>()) < pt) as u8;
        }
    }
    Ok((BinaryPanel::new(n, t_len, y)?, ProbPanel::new(n, t_len, p)?))
}

/// Draws `n` distinct grid sites and a length-`T` panel from the model.
pub fn gen_gp_panel<T: Scalar>(spec: &TruthSpec<T>, n: usize, t_len: usize) -> Result<SimulatedPanel<T>> {
    let (coef, cov, kernel) = spec.gp_parts()?;
    let d = coef.alpha.len();
    if n == 0 || t_len == 0 {
        return Err(Error::ShapeMismatch("simulation needs n >= 1 and T >= 1".into()));
    }
    let levels = spec.grid_levels.max(2);
    let total = levels.checked_pow(d as u32).unwrap_or(usize::MAX);
    if n > total {
        return Err(Error::InvalidParameter(format!("{n} sites requested from a grid of {total}")));
    }
    let mut rng = rng_from(spec.seed, stream::DATA);
    let mut picks = sample_indices(&mut rng, total, n).into_vec();
    picks.sort_unstable();
    let sites: Vec<Vec<T>> = picks.iter().map(|&k| grid_point(k, levels, d)).collect();
    let inputs = InputDesign::from_rows(&sites)?;
    let chol = corr_matrix(&kernel, &inputs)?.factor()?;
    let sd = cov.sigma2.sqrt();

    let beta = coef.to_flat();
    let mut row = vec![T::zero(); spec.order.columns(d)];
    let mut z = vec![T::zero(); n];
    let mut current_t = 0;
    let (panel, p) = recurse(n, t_len, &mut rng, |i, t, lagged, rng| {
        if t != current_t {
            current_t = t;
            let e: Vec<T> = (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
            for (a, za) in z.iter_mut().enumerate() {
                let mut s = T::zero();
                for (b, eb) in e.iter().enumerate().take(a + 1) {
                    s += chol.at(a, b) * *eb;
                }
                *za = sd * s;
            }
        }
        spec.order.row_into(inputs.site(i), lagged, &mut row);
        crate::scalar::dot(&row, &beta) + z[i]
    })?;
    Ok(SimulatedPanel { inputs, panel, p })
}

/// Logit of the modified Friedman surface without the lag term.
pub fn friedman_mean<T: Scalar>(x: &[T]) -> T {
    let pi = T::pi();
    let half = T::lit(0.5);
    let lin =
        T::lit(10.0) * (pi * x[0] * x[1]).sin() + T::lit(20.0) * (x[2] - half) * (x[2] - half) + T::lit(10.0) * x[3] + T::lit(5.0) * x[4];
    lin / T::lit(3.0) - T::lit(5.0)
}

/// Friedman benchmark panel on `n` uniform sites in five dimensions, with
/// `y_0 = 0`.
pub fn gen_friedman_panel<T: Scalar>(n: usize, t_len: usize, seed: u64) -> Result<SimulatedPanel<T>> {
    if n == 0 || t_len == 0 {
        return Err(Error::ShapeMismatch("simulation needs n >= 1 and T >= 1".into()));
    }
    let mut rng = rng_from(seed, stream::DATA);
    let data: Vec<T> = (0..n * 5).map(|_| T::lit(rng.random::<f64>())).collect();
    let inputs = InputDesign::new(n, 5, data)?;
    let (panel, p) = recurse(n, t_len, &mut rng, |i, _, lagged, _| T::lit(lagged(1) as f64) + friedman_mean(inputs.site(i)))?;
    Ok(SimulatedPanel { inputs, panel, p })
}

/// The one-dimensional demo curve `0.4 exp(-1.2x) cos(3.5 pi x) + 0.4`.
pub fn demo_curve<T: Scalar>(x: T) -> T {
    T::lit(0.4) * (T::lit(-1.2) * x).exp() * (T::lit(3.5) * T::pi() * x).cos() + T::lit(0.4)
}

/// One draw at each of `n_sites` evenly spaced points on `[0, 1]`.
pub fn gen_demo_1d<T: Scalar>(n_sites: usize, seed: u64) -> Result<SimulatedPanel<T>> {
    if n_sites < 2 {
        return Err(Error::InvalidParameter("the demo needs at least two sites".into()));
    }
    let step = T::one() / T::lit((n_sites - 1) as f64);
    let xs: Vec<T> = (0..n_sites).map(|i| T::lit(i as f64) * step).collect();
    let inputs = InputDesign::new(n_sites, 1, xs.clone())?;
    let mut rng = rng_from(seed, stream::DATA);
    let p: Vec<T> = xs.iter().map(|x| demo_curve(*x)).collect();
    let y = p.iter().map(|p| (T::lit(rng.random::<f64>()) < *p) as u8).collect();
    Ok(SimulatedPanel { inputs, panel: BinaryPanel::new(n_sites, 1, y)?, p: ProbPanel::new(n_sites, 1, p)? })
}

/// Dispatches on the generator kind.
pub fn generate<T: Scalar>(spec: &TruthSpec<T>, n: usize, t_len: usize) -> Result<SimulatedPanel<T>> {
    match spec.generator {
        Generator::GpModel => gen_gp_panel(spec, n, t_len),
        Generator::Friedman => gen_friedman_panel(n, t_len, spec.seed),
        Generator::Custom1D => gen_demo_1d(n, spec.seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_truth(sigma2: f64, phi: f64) -> TruthSpec<f64> {
        let mut s = TruthSpec::reference_gp(7);
        s.coefficients = Some(Coefficients { phi: vec![phi], alpha0: 0.0, alpha: vec![0.0; 5], gamma: vec![] });
        s.cov.as_mut().unwrap().sigma2 = sigma2;
        s
    }

    #[test]
    fn reference_truth_echo() {
        let s = TruthSpec::<f64>::reference_gp(1);
        let c = s.coefficients.as_ref().unwrap();
        assert_eq!(c.alpha0, 0.5);
        assert_eq!(c.alpha, vec![-3.0, 2.0, -2.0, 1.0, 0.5]);
        assert_eq!(c.phi, vec![0.8]);
        let cov = s.cov.as_ref().unwrap();
        assert_eq!(cov.sigma2, 1.0);
        assert_eq!(cov.theta, vec![0.5, 1.0, 1.5, 2.0, 2.5]);
        assert_eq!(s.kernel.as_ref().unwrap().power, 2.0);
        assert_eq!(s.order, ModelOrder::new(1, 0));
    }

    #[test]
    fn null_truth_gives_one_half() {
        let mut s = flat_truth(0.0, 0.0);
        s.cov.as_mut().unwrap().sigma2 = 0.0;
        let sim = gen_gp_panel(&s, 30, 5).unwrap();
        assert!(sim.p.as_slice().iter().all(|p| *p == 0.5));
    }

    #[test]
    fn grid_sites_are_distinct_grid_points() {
        let sim = gen_gp_panel(&TruthSpec::<f64>::reference_gp(3), 200, 2).unwrap();
        let mut seen = std::collections::HashSet::new();
        for x in sim.inputs.sites() {
            for v in x {
                let k = v * 3.0;
                assert!((k - k.round()).abs() < 1e-12);
            }
            assert!(seen.insert(x.iter().map(|v| (v * 3.0).round() as i64).collect::<Vec<_>>()));
        }
    }

    #[test]
    fn seed_determinism_and_ranges() {
        let s = TruthSpec::<f64>::reference_gp(11);
        let a = gen_gp_panel(&s, 40, 6).unwrap();
        let b = gen_gp_panel(&s, 40, 6).unwrap();
        assert_eq!(a, b);
        assert!(a.p.as_slice().iter().all(|p| *p > 0.0 && *p < 1.0));
        let c = gen_gp_panel(&TruthSpec::<f64>::reference_gp(12), 40, 6).unwrap();
        assert_ne!(a.panel, c.panel);
        assert_eq!(gen_friedman_panel::<f64>(20, 4, 5).unwrap(), gen_friedman_panel(20, 4, 5).unwrap());
    }

    #[test]
    fn nearby_sites_are_more_correlated() {
        // Two fixed pairs from a hand-built truth: logit p = Z, sigma2 = 4.
        let mut spec = flat_truth(4.0, 0.0);
        spec.grid_levels = 2;
        let mut near = Vec::new();
        let mut far = Vec::new();
        for rep in 0..200u64 {
            spec.seed = rep;
            let sim = gen_gp_panel(&spec, 32, 1).unwrap();
            let logit = |i: usize| crate::scalar::logit(sim.p.get(i, 1));
            // site 0 is the origin, site 16 moves along the longest
            // lengthscale, site 31 is the opposite corner
            near.push((logit(0), logit(16)));
            far.push((logit(0), logit(31)));
        }
        let corr = |v: &[(f64, f64)]| {
            let n = v.len() as f64;
            let (ma, mb) = v.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
            let cov = v.iter().map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
            let va = v.iter().map(|(x, _)| (x - ma).powi(2)).sum::<f64>();
            let vb = v.iter().map(|(_, y)| (y - mb).powi(2)).sum::<f64>();
            cov / (va * vb).sqrt()
        };
        assert!(corr(&near) > corr(&far) + 0.2, "{} vs {}", corr(&near), corr(&far));
    }

    #[test]
    fn autoregression_shows_in_lag_one_correlation() {
        let spec = flat_truth(0.5, 1.5);
        let mut positive = 0;
        for rep in 0..10u64 {
            let mut s = spec.clone();
            s.seed = rep;
            let sim = gen_gp_panel(&s, 50, 30).unwrap();
            let (mut same, mut total) = (0.0, 0.0);
            let ybar = (0..50).flat_map(|i| sim.panel.series(i).iter()).map(|v| *v as f64).sum::<f64>() / 1500.0;
            for i in 0..50 {
                let s = sim.panel.series(i);
                for t in 1..30 {
                    same += (s[t] as f64 - ybar) * (s[t - 1] as f64 - ybar);
                    total += 1.0;
                }
            }
            if same / total > 0.0 {
                positive += 1;
            }
        }
        assert_eq!(positive, 10);
    }

    #[test]
    fn friedman_formula_examples() {
        let x = [0.0, 0.0, 0.5, 0.0, 0.0];
        assert!((friedman_mean(&x) + 5.0f64).abs() < 1e-15);
        assert!((logistic(friedman_mean(&x)) - 0.006_692_850_924_284_856).abs() < 1e-15);
        let with_lag = 1.0 + friedman_mean(&x);
        assert!((with_lag + 4.0f64).abs() < 1e-15);
    }

    #[test]
    fn friedman_probabilities_span_the_unit_interval() {
        let sim = gen_friedman_panel::<f64>(20_000, 5, 3).unwrap();
        let (lo, hi) = sim.p.as_slice().iter().fold((1.0f64, 0.0f64), |(a, b), p| (a.min(*p), b.max(*p)));
        assert!(lo > 0.0 && hi < 1.0);
        assert!(lo < 0.01 && hi > 0.99, "{lo} {hi}");
        // first period has y_0 = 0
        for i in 0..50 {
            assert_eq!(sim.p.get(i, 1), logistic(friedman_mean(sim.inputs.site(i))));
        }
    }

    #[test]
    fn demo_curve_examples() {
        assert_eq!(demo_curve(0.0f64), 0.8);
        let max = (0..=10_000).map(|k| demo_curve(k as f64 / 10_000.0)).fold(f64::MIN, f64::max);
        let min = (0..=10_000).map(|k| demo_curve(k as f64 / 10_000.0)).fold(f64::MAX, f64::min);
        assert!(max <= 0.8 && min >= 0.0);
        let sim = gen_demo_1d::<f64>(12, 1).unwrap();
        assert_eq!(sim.panel.t(), 1);
        for i in 1..12 {
            let gap = sim.inputs.site(i)[0] - sim.inputs.site(i - 1)[0];
            assert!((gap - 1.0 / 11.0).abs() < 1e-15);
        }
    }
}
