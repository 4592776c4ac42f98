//! The logit-normal law: `P = logistic(X)` with `X ~ Normal(m, v)`.
//!
//! Moments have no closed form. For `v <= GH_MAX_VARIANCE` they come from a
//! 64-node Gauss-Hermite rule; beyond that the integrand's poles at
//! `x = ±iπ` sit too close to the real axis (in the rescaled variable) for a
//! fixed rule, and a trapezoid rule on the logit scale takes over. The
//! trapezoid step is chosen so both the pole and the Gaussian contribute
//! errors below 1e-15.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gh128, gh64};
use crate::scalar::{logistic, Scalar};

/// Largest variance handled by the Gauss-Hermite rule.
pub const GH_MAX_VARIANCE: f64 = 1.0;

/// Half-width of the trapezoid window, in standard deviations.
const TRAP_HALF_WIDTH: f64 = 9.5;
const TRAP_MAX_STEP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LogitNormal<T> {
    pub m: T,
    pub v: T,
}

/// Quadrature scheme, exposed for convergence checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Hermite64,
    Hermite128,
    /// Trapezoid with the given step divisor (1 = default step, 2 = halved).
    Trapezoid(u32),
}

impl<T: Scalar> LogitNormal<T> {
    pub fn new(m: T, v: T) -> Result<Self> {
        if !v.is_finite() || v < T::zero() || !m.is_finite() {
            return Err(Error::InvalidParameter(format!("logit-normal needs finite m and v >= 0, got m={}, v={}", m.as_f64(), v.as_f64())));
        }
        Ok(Self { m, v })
    }

    pub fn mean(&self) -> T {
        kappa(self.m, self.v)
    }

    pub fn variance(&self) -> T {
        tau(self.m, self.v)
    }

    pub fn quantile(&self, q: f64) -> Result<T> {
        quantile(self.m, self.v, q)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        sample(self.m, self.v, rng)
    }
}

fn default_rule(v: f64) -> Rule {
    if v <= GH_MAX_VARIANCE {
        Rule::Hermite64
    } else {
        Rule::Trapezoid(1)
    }
}

/// Calls `f(x, weight)` for each node of the rule; weights sum to 1.
fn for_each_node<T: Scalar>(m: T, v: T, rule: Rule, mut f: impl FnMut(T, T)) {
    match rule {
        Rule::Hermite64 | Rule::Hermite128 => {
            let (nodes, weights) = if rule == Rule::Hermite64 { gh64() } else { gh128() };
            let scale = (T::lit(2.0) * v).sqrt();
            let norm = T::lit(1.0 / std::f64::consts::PI.sqrt());
            for (t, w) in nodes.iter().zip(weights) {
                f(m + scale * T::lit(*t), T::lit(*w) * norm);
            }
        }
        Rule::Trapezoid(div) => {
            let s = v.sqrt();
            let h = (s * T::lit(0.5)).min(T::lit(TRAP_MAX_STEP)) / T::lit(div as f64);
            let half = (T::lit(TRAP_HALF_WIDTH) * s / h).ceil().as_f64() as i64;
            let norm = h / (s * T::lit((2.0 * std::f64::consts::PI).sqrt()));
            for k in -half..=half {
                let z = h * T::lit(k as f64) / s;
                let w = norm * (-(z * z) * T::lit(0.5)).exp();
                f(m + h * T::lit(k as f64), w);
            }
        }
    }
}

/// `E[P]` under the chosen rule.
pub fn kappa_with<T: Scalar>(m: T, v: T, rule: Rule) -> T {
    if v <= T::zero() {
        return logistic(m);
    }
    let mut acc = T::zero();
    for_each_node(m, v, rule, |x, w| acc += w * logistic(x));
    acc
}

/// `Var[P]` under the chosen rule, accumulated around the mean.
pub fn tau_with<T: Scalar>(m: T, v: T, rule: Rule) -> T {
    if v <= T::zero() {
        return T::zero();
    }
    let k = kappa_with(m, v, rule);
    let mut acc = T::zero();
    for_each_node(m, v, rule, |x, w| {
        let dev = logistic(x) - k;
        acc += w * dev * dev;
    });
    acc.clamp(T::zero(), T::lit(0.25))
}

/// `E[P^2]` under the chosen rule.
pub fn second_moment_with<T: Scalar>(m: T, v: T, rule: Rule) -> T {
    if v <= T::zero() {
        let p = logistic(m);
        return p * p;
    }
    let mut acc = T::zero();
    for_each_node(m, v, rule, |x, w| {
        let p = logistic(x);
        acc += w * p * p;
    });
    acc
}

/// Mean of the logit-normal law.
pub fn kappa<T: Scalar>(m: T, v: T) -> T {
    kappa_with(m, v, default_rule(v.as_f64()))
}

/// Variance of the logit-normal law.
pub fn tau<T: Scalar>(m: T, v: T) -> T {
    tau_with(m, v, default_rule(v.as_f64()))
}

pub fn second_moment<T: Scalar>(m: T, v: T) -> T {
    second_moment_with(m, v, default_rule(v.as_f64()))
}

/// Standard normal quantile.
pub fn normal_quantile(q: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(q)
}

/// `q`-quantile, `logistic(m + z_q sqrt(v))`.
pub fn quantile<T: Scalar>(m: T, v: T, q: f64) -> Result<T> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1), got {q}")));
    }
    if v <= T::zero() {
        return Ok(logistic(m));
    }
    Ok(logistic(m + T::lit(normal_quantile(q)) * v.sqrt()))
}

/// One draw of `logistic(Normal(m, v))`.
pub fn sample<T: Scalar, R: Rng + ?Sized>(m: T, v: T, rng: &mut R) -> T {
    let z: f64 = rng.sample(StandardNormal);
    logistic(m + v.max(T::zero()).sqrt() * T::lit(z))
}
