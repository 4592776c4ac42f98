//! Dynamic emulation of a whole new series at an untried input.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_quantiles, sorted_quantile, PosteriorSamples, Predictor, QuantilePoint};
use crate::error::{Error, Result};
use crate::logitnormal::sample as sample_logitnormal;
use crate::scalar::Scalar;
use crate::seed::{rng_from, stream};

/// Cross-path summary at one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatedStep {
    pub t: usize,
    pub mean_p: f64,
    pub median_p: f64,
    /// Majority vote across paths, ties going to 1.
    pub median_y: u8,
    pub bands: Vec<QuantilePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Emulation {
    pub steps: Vec<EmulatedStep>,
    /// `p_paths[j][t-1]`.
    pub p_paths: Vec<Vec<f64>>,
    pub y_paths: Vec<Vec<u8>>,
}

impl Emulation {
    pub fn median_p(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.median_p).collect()
    }
}

/// Emulates `t_out` steps at raw input `x`, one path per posterior draw.
///
/// Inside the fitted time range a step conditions on that draw's training
/// logits; outside it falls back to the prior law. Lags before the start of
/// a path read 0. Path `j` uses its own sub-seed, so results do not depend
/// on the thread count.
pub fn emulate_series<T: Scalar>(
    pred: &Predictor<'_, T>,
    samples: &PosteriorSamples<T>,
    x_raw: &[T],
    t_out: usize,
    seed: u64,
    levels: &[f64],
) -> Result<Emulation> {
    if t_out == 0 {
        return Err(Error::InvalidParameter("emulation length must be at least 1".into()));
    }
    let model = pred.model();
    let x = model.scale_input(x_raw);
    let sw = pred.weights(&x)?;
    let n = model.inputs.n();
    let lag = model.order.lag();

    let paths: Vec<(Vec<f64>, Vec<u8>)> = (0..samples.len())
        .into_par_iter()
        .map(|j| {
            let mut rng = rng_from(seed, stream::EMULATE_BASE + j as u64);
            let draw = samples.sample(j);
            let mut ps = Vec::with_capacity(t_out);
            let mut ys: Vec<u8> = Vec::with_capacity(t_out);
            let mut history = vec![0u8; lag];
            for t in 1..=t_out {
                for (k, h) in history.iter_mut().enumerate() {
                    *h = if t > k + 1 { ys[t - k - 2] } else { 0 };
                }
                let logits = pred.block_of(t).map(|b| (b, &draw[b * n..(b + 1) * n]));
                let law = pred.law(&x, &history, &sw, logits);
                let p = sample_logitnormal(law.m, law.v, &mut rng).as_f64();
                ps.push(p);
                ys.push((rng.random::<f64>() < p) as u8);
            }
            (ps, ys)
        })
        .collect();

    let j_count = paths.len() as f64;
    let mut column = vec![0.0; paths.len()];
    let mut steps = Vec::with_capacity(t_out);
    for t in 0..t_out {
        for (c, (ps, _)) in column.iter_mut().zip(&paths) {
            *c = ps[t];
        }
        let mean_p = column.iter().sum::<f64>() / j_count;
        let bands = sample_quantiles(&mut column, levels);
        let median_p = sorted_quantile(&column, 0.5);
        let ones = paths.iter().filter(|(_, ys)| ys[t] == 1).count() as f64;
        steps.push(EmulatedStep { t: t + 1, mean_p, median_p, median_y: (ones >= 0.5 * j_count) as u8, bands });
    }
    let (p_paths, y_paths) = paths.into_iter().unzip();
    Ok(Emulation { steps, p_paths, y_paths })
}
