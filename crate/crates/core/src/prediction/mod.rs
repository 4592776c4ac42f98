//! Predictive distributions at untried inputs.
//!
//! Given the training probabilities at time `s`, the logit of `p_s(x)` is
//! normal with mean `mu_s(x) + w'(logit p_s - mu_s)` and variance
//! `sigma^2 (1 - r'w)`, where `w = R^{-1} r`. When only binary data are
//! available the training probabilities are integrated out with posterior
//! draws from [`mh_sample_probs`].

mod emulate;
mod mh;

pub use emulate::{emulate_series, EmulatedStep, Emulation};
pub use mh::{mh_sample_probs, split_rhat, MhConfig, PosteriorSamples};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FittedModel;
use crate::kernel::{cross_corr, KernelSpec};
use crate::linalg::Cholesky;
use crate::logitnormal::{kappa, sample as sample_logitnormal, tau};
use crate::panel::DesignMatrix;
use crate::scalar::{dot, logit, Scalar};
use crate::seed::{rng_from, stream};

/// Mean and variance of the normal law of `logit p_s(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ConditionalLaw<T> {
    pub m: T,
    pub v: T,
}

/// Kriging weights for one query site.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteWeights<T> {
    /// `w = (R + eps I)^{-1} r`, or a unit vector at a training site.
    pub w: Vec<T>,
    /// `sigma^2 (1 - r'w)`, clamped at 0.
    pub v: T,
    /// Index of the training site `x` coincides with, if any.
    pub coincident: Option<usize>,
}

/// `(kappa(m, v), tau(m, v))`, the MMSPE predictor and its error variance
/// given the training probabilities.
pub fn mmspe_given_p<T: Scalar>(law: ConditionalLaw<T>) -> (T, T) {
    (kappa(law.m, law.v), tau(law.m, law.v))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub q: f64,
    pub value: f64,
}

/// Monte Carlo predictive distribution of `p_s(x)` given binary data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveSummary {
    pub mean: f64,
    pub variance: f64,
    pub quantiles: Vec<QuantilePoint>,
    pub n_mc: usize,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub max_rhat: f64,
}

impl PredictiveSummary {
    pub fn quantile(&self, q: f64) -> Option<f64> {
        self.quantiles.iter().find(|p| p.q == q).map(|p| p.value)
    }
}

/// Linear-interpolation (type 7) sample quantile of sorted data.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Sample quantiles at each level in `levels`.
pub fn sample_quantiles(values: &mut [f64], levels: &[f64]) -> Vec<QuantilePoint> {
    values.sort_by(|a, b| a.total_cmp(b));
    levels.iter().map(|&q| QuantilePoint { q, value: sorted_quantile(values, q) }).collect()
}

/// Per-model prediction state: the fitted kernel, the factor of the
/// training correlation matrix, and the prior mean at every model row.
#[derive(Debug, Clone)]
pub struct Predictor<'a, T: Scalar> {
    model: &'a FittedModel<T>,
    kernel: KernelSpec<T>,
    chol: Cholesky<T>,
    design: DesignMatrix<T>,
    mu: Vec<T>,
}

impl<'a, T: Scalar> Predictor<'a, T> {
    pub fn new(model: &'a FittedModel<T>) -> Result<Self> {
        let kernel = model.fitted_kernel();
        let chol = crate::kernel::corr_matrix(&kernel, &model.inputs)?.factor()?;
        let design = model.design()?;
        let mu = design.mul_vec(&model.beta);
        Ok(Self { model, kernel, chol, design, mu })
    }

    pub fn model(&self) -> &FittedModel<T> {
        self.model
    }

    pub fn design(&self) -> &DesignMatrix<T> {
        &self.design
    }

    /// Prior mean `mu_t` at every model row.
    pub fn prior_mean(&self) -> &[T] {
        &self.mu
    }

    /// Kriging weights at `x` (already in the fitted input space).
    pub fn weights(&self, x: &[T]) -> Result<SiteWeights<T>> {
        if let Some(i) = self.model.inputs.sites().position(|s| s == x) {
            let mut w = vec![T::zero(); self.model.inputs.n()];
            w[i] = T::one();
            return Ok(SiteWeights { w, v: T::zero(), coincident: Some(i) });
        }
        let r = cross_corr(&self.kernel, &self.model.inputs, x)?;
        let w = self.chol.solve(&r);
        let v = (self.model.cov.sigma2 * (T::one() - dot(&r, &w))).max(T::zero());
        Ok(SiteWeights { w, v, coincident: None })
    }

    /// Mean function at `x` given `history[k-1] = y_{s-k}`; missing lags read 0.
    pub fn mean_at(&self, x: &[T], history: &[u8]) -> T {
        self.model.mean_at(x, |k| history.get(k - 1).copied().unwrap_or(0))
    }

    /// Model-matrix block of time `s`, if `s` lies in the fitted range.
    pub fn block_of(&self, s: usize) -> Option<usize> {
        let lag = self.design.lag();
        (s > lag && s <= self.model.panel.t()).then(|| s - lag - 1)
    }

    /// Law of `logit p_s(x)` given the training logits at time `s`
    /// (`None` outside the fitted time range: the prior law).
    pub fn law(&self, x: &[T], history: &[u8], sw: &SiteWeights<T>, block_logits: Option<(usize, &[T])>) -> ConditionalLaw<T> {
        let prior = self.mean_at(x, history);
        match block_logits {
            Some((b, logits)) => {
                let n = self.model.inputs.n();
                let mu = &self.mu[b * n..(b + 1) * n];
                let mut s = T::zero();
                for ((w, l), m) in sw.w.iter().zip(logits).zip(mu) {
                    s += *w * (*l - *m);
                }
                ConditionalLaw { m: prior + s, v: sw.v }
            }
            None => ConditionalLaw { m: prior, v: self.model.cov.sigma2 },
        }
    }

    /// Monte Carlo predictive summary of `p_s(x)` for raw input `x`.
    pub fn predict(
        &self,
        samples: &PosteriorSamples<T>,
        x_raw: &[T],
        history: &[u8],
        s: usize,
        levels: &[f64],
    ) -> Result<PredictiveSummary> {
        let x = self.model.scale_input(x_raw);
        let sw = self.weights(&x)?;
        let block = self.block_of(s);
        let n = self.model.inputs.n();
        let j_count = samples.len();
        let mut kap = Vec::with_capacity(j_count);
        let mut tau_sum = 0.0;
        let mut draws = Vec::with_capacity(j_count);
        let seed = crate::seed::derive_seed(samples.seed, stream::PREDICT_DRAWS);
        let mut rng = rng_from(seed, s as u64);
        for j in 0..j_count {
            let logits = block.map(|b| (b, &samples.sample(j)[b * n..(b + 1) * n]));
            let law = self.law(&x, history, &sw, logits);
            let (k, t) = mmspe_given_p(law);
            kap.push(k.as_f64());
            tau_sum += t.as_f64();
            draws.push(sample_logitnormal(law.m, law.v, &mut rng).as_f64());
        }
        let jf = j_count as f64;
        let mean = kap.iter().sum::<f64>() / jf;
        let spread = if j_count > 1 { kap.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (jf - 1.0) } else { 0.0 };
        Ok(PredictiveSummary {
            mean,
            variance: tau_sum / jf + spread,
            quantiles: sample_quantiles(&mut draws, levels),
            n_mc: j_count,
            seed: samples.seed,
            acceptance_rate: samples.acceptance_rate,
            max_rhat: samples.max_rhat,
        })
    }

    /// Posterior-mean MMSPE prediction of `p_s(x)` given binary data,
    /// without draws or quantiles.
    pub fn predict_mean(&self, samples: &PosteriorSamples<T>, x_raw: &[T], history: &[u8], s: usize) -> Result<T> {
        let x = self.model.scale_input(x_raw);
        let sw = self.weights(&x)?;
        let block = self.block_of(s);
        let n = self.model.inputs.n();
        let mut acc = T::zero();
        for j in 0..samples.len() {
            let logits = block.map(|b| (b, &samples.sample(j)[b * n..(b + 1) * n]));
            let law = self.law(&x, history, &sw, logits);
            acc += kappa(law.m, law.v);
        }
        Ok(acc / T::lit(samples.len() as f64))
    }
}

/// Law of `logit p_s(x)` given probabilities `p_s` at the training sites.
/// `x` is in the fitted input space and `s` must lie in the fitted range.
pub fn conditional_law<T: Scalar>(model: &FittedModel<T>, x: &[T], history: &[u8], p_s: &[T], s: usize) -> Result<ConditionalLaw<T>> {
    let pred = Predictor::new(model)?;
    if p_s.len() != model.inputs.n() {
        return Err(Error::DimensionMismatch { expected: model.inputs.n(), got: p_s.len() });
    }
    if let Some(k) = p_s.iter().position(|p| !(*p > T::zero() && *p < T::one())) {
        return Err(Error::DegenerateProbability { index: k, value: p_s[k].as_f64() });
    }
    let block = pred.block_of(s).ok_or_else(|| {
        Error::InvalidParameter(format!("time {s} is outside the fitted range {}..={}", pred.design.lag() + 1, model.panel.t()))
    })?;
    let sw = pred.weights(x)?;
    let logits: Vec<T> = p_s.iter().map(|p| logit(*p)).collect();
    Ok(pred.law(x, history, &sw, Some((block, &logits))))
}

/// Runs the sampler and summarizes the predictive law of `p_s(x)`.
pub fn predict_at<T: Scalar>(
    model: &FittedModel<T>,
    x_raw: &[T],
    history: &[u8],
    s: usize,
    cfg: &MhConfig,
    levels: &[f64],
) -> Result<PredictiveSummary> {
    let samples = mh_sample_probs(model, cfg)?;
    Predictor::new(model)?.predict(&samples, x_raw, history, s, levels)
}

/// One Bernoulli draw per probability sample.
pub fn bootstrap_binary<R: Rng + ?Sized>(p_samples: &[f64], rng: &mut R) -> Vec<u8> {
    p_samples.iter().map(|p| (rng.random::<f64>() < *p) as u8).collect()
}
