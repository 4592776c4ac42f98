//! Single-component Metropolis-Hastings for the training logits given the
//! binary responses.
//!
//! Time blocks are independent a posteriori, so each block runs its own
//! chain with its own sub-seed; results do not depend on the thread count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::FittedModel;
use crate::kernel::corr_matrix;
use crate::linalg::Cholesky;
use crate::scalar::{logit, Scalar};
use crate::seed::{derive_seed, rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MhConfig {
    /// Retained draws `J`.
    pub n_samples: usize,
    /// Full sweeps discarded before retaining.
    pub burn_in: usize,
    /// Sweeps between retained draws.
    pub thin: usize,
    pub seed: u64,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self { n_samples: 1000, burn_in: 500, thin: 2, seed: 0 }
    }
}

impl MhConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.thin == 0 {
            return Err(Error::InvalidParameter("sampler needs n_samples >= 1 and thin >= 1".into()));
        }
        Ok(())
    }
}

/// Retained draws of the training logits, one row of length `N` per draw in
/// model-row order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples<T> {
    logits: Vec<T>,
    rows: usize,
    pub seed: u64,
    pub acceptance_rate: f64,
    /// Largest split-R-hat over coordinates (1 when fewer than 4 draws).
    pub max_rhat: f64,
}

impl<T: Scalar> PosteriorSamples<T> {
    pub fn len(&self) -> usize {
        self.logits.len() / self.rows.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Logits of draw `j`.
    pub fn sample(&self, j: usize) -> &[T] {
        &self.logits[j * self.rows..(j + 1) * self.rows]
    }
}

/// Split-R-hat of one chain: the two halves act as separate chains.
pub fn split_rhat(chain: &[f64]) -> f64 {
    let h = chain.len() / 2;
    if h < 2 {
        return 1.0;
    }
    let stats = |c: &[f64]| {
        let m = c.iter().sum::<f64>() / h as f64;
        let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (h - 1) as f64;
        (m, v)
    };
    let (m1, v1) = stats(&chain[..h]);
    let (m2, v2) = stats(&chain[h..2 * h]);
    let w = 0.5 * (v1 + v2);
    if w <= 0.0 {
        return 1.0;
    }
    let b_over_h = 0.5 * (m1 - m2).powi(2);
    let var_plus = (h as f64 - 1.0) / h as f64 * w + b_over_h;
    (var_plus / w).sqrt()
}

#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of `y` at logit `l`.
#[inline]
fn loglik<T: Scalar>(y: u8, l: T) -> T {
    let s = softplus(l);
    if y == 1 {
        l - s
    } else {
        -s
    }
}

struct BlockChain<'a, T> {
    q: &'a [T],
    cond_sd: &'a [T],
    mu: &'a [T],
    y: &'a [u8],
}

impl<T: Scalar> BlockChain<'_, T> {
    /// Runs the chain and returns the retained draws (`J x n`) and the
    /// number of accepted proposals.
    fn run<R: Rng>(&self, start: &[T], cfg: &MhConfig, rng: &mut R) -> (Vec<T>, u64) {
        let n = start.len();
        let mut l = start.to_vec();
        let mut dev: Vec<T> = l.iter().zip(self.mu).map(|(a, b)| *a - *b).collect();
        let mut g: Vec<T> = (0..n).map(|k| crate::scalar::dot(&self.q[k * n..(k + 1) * n], &dev)).collect();
        let mut out = Vec::with_capacity(cfg.n_samples * n);
        let mut accepted = 0u64;
        let total = cfg.burn_in + cfg.n_samples * cfg.thin;
        for sweep in 1..=total {
            for k in 0..n {
                let qkk = self.q[k * n + k];
                let cm = self.mu[k] - (g[k] - qkk * dev[k]) / qkk;
                let prop = cm + self.cond_sd[k] * T::lit(rng.sample::<f64, _>(StandardNormal));
                let log_ratio = loglik(self.y[k], prop) - loglik(self.y[k], l[k]);
                let u: f64 = rng.random();
                if u.ln() < log_ratio.as_f64() {
                    let delta = prop - l[k];
                    l[k] = prop;
                    dev[k] += delta;
                    // Q is symmetric, so column k is row k
                    for (gi, qi) in g.iter_mut().zip(&self.q[k * n..(k + 1) * n]) {
                        *gi += *qi * delta;
                    }
                    if sweep > cfg.burn_in {
                        accepted += 1;
                    }
                }
            }
            if sweep > cfg.burn_in && (sweep - cfg.burn_in).is_multiple_of(cfg.thin) {
                out.extend_from_slice(&l);
            }
        }
        (out, accepted)
    }
}

/// Draws `J` vectors of training logits from their posterior given `Y`,
/// starting at the fitted values.
pub fn mh_sample_probs<T: Scalar>(model: &FittedModel<T>, cfg: &MhConfig) -> Result<PosteriorSamples<T>> {
    cfg.validate()?;
    let design = model.design()?;
    let n = design.n();
    let blocks = design.blocks();
    let rows = design.rows();
    let chol = Cholesky::factor(corr_matrix(&model.fitted_kernel(), &model.inputs)?.regularized(), n).ok_or(Error::NotPositiveDefinite)?;
    let q = chol.inverse();
    let sigma2 = model.cov.sigma2.max(T::zero());
    let cond_sd: Vec<T> = (0..n).map(|k| (sigma2 / q[k * n + k]).sqrt()).collect();
    let mu = design.mul_vec(&model.beta);
    let start: Vec<T> = model.state.p.iter().map(|p| logit(*p)).collect();
    let y = design.response();
    let base = derive_seed(cfg.seed, stream::MH_CHAIN);

    let per_block: Vec<(Vec<T>, u64)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let range = b * n..(b + 1) * n;
            let chain = BlockChain { q: &q, cond_sd: &cond_sd, mu: &mu[range.clone()], y: &y[range.clone()] };
            chain.run(&start[range], cfg, &mut rng_from(base, b as u64))
        })
        .collect();

    let j_count = cfg.n_samples;
    let mut logits = vec![T::zero(); j_count * rows];
    let mut accepted = 0u64;
    for (b, (draws, acc)) in per_block.iter().enumerate() {
        accepted += acc;
        for j in 0..j_count {
            logits[j * rows + b * n..j * rows + (b + 1) * n].copy_from_slice(&draws[j * n..(j + 1) * n]);
        }
    }
    let mut max_rhat: f64 = 1.0;
    let mut chain = vec![0.0; j_count];
    for k in 0..rows {
        for (j, c) in chain.iter_mut().enumerate() {
            *c = logits[j * rows + k].as_f64();
        }
        max_rhat = max_rhat.max(split_rhat(&chain));
    }
    let proposals = (j_count * cfg.thin * rows) as f64;
    let acceptance_rate = accepted as f64 / proposals;
    log::debug!("sampler: acceptance {acceptance_rate:.3}, max split-R-hat {max_rhat:.3}");
    Ok(PosteriorSamples { logits, rows, seed: cfg.seed, acceptance_rate, max_rhat })
}
