//! Evaluation: RMSPE against true probabilities, proper scoring rules, and
//! logistic-regression baselines without the random effect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::panel::{build_design, BinaryPanel, InputDesign, ModelOrder, ProbPanel};
use crate::scalar::{clamp_prob, dot, logistic, Scalar};

/// Root mean squared difference between two probability panels.
pub fn rmspe<T: Scalar>(truth: &ProbPanel<T>, pred: &ProbPanel<T>) -> Result<f64> {
    if truth.n() != pred.n() || truth.t() != pred.t() {
        return Err(Error::ShapeMismatch(format!("panels are {}x{} and {}x{}", truth.n(), truth.t(), pred.n(), pred.t())));
    }
    let a = truth.as_slice();
    let b = pred.as_slice();
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// Mean scores of a set of forecasts; larger is better for all four.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub brier: f64,
    pub spherical: f64,
    pub logarithmic: f64,
    pub zero_one: f64,
}

/// Forecasts are clamped to `[1e-12, 1 - 1e-12]` before taking logs.
pub const SCORE_CLAMP: f64 = 1e-12;

/// Brier, spherical, logarithmic and zero-one scores with threshold `c`
/// (a forecast equal to `c` predicts 1).
pub fn proper_scores(y: &[u8], p: &[f64], c: f64) -> Result<Scores> {
    if y.len() != p.len() || y.is_empty() {
        return Err(Error::DimensionMismatch { expected: y.len(), got: p.len() });
    }
    let mut s = Scores::default();
    for (&yi, &pi) in y.iter().zip(p) {
        let yf = yi as f64;
        s.brier -= (yf - pi).powi(2);
        let pc = clamp_prob(pi, SCORE_CLAMP);
        s.logarithmic += yf * pc.ln() + (1.0 - yf) * (1.0 - pc).ln();
        s.spherical += (yf * pi + (1.0 - yf) * (1.0 - pi)) / (pi * pi + (1.0 - pi) * (1.0 - pi)).sqrt();
        s.zero_one += (((pi >= c) as u8) == yi) as u8 as f64;
    }
    let n = y.len() as f64;
    s.brier /= n;
    s.logarithmic /= n;
    s.spherical /= n;
    s.zero_one /= n;
    Ok(s)
}

/// Median of each score across entries.
pub fn median_scores(all: &[Scores]) -> Scores {
    let med = |f: fn(&Scores) -> f64| {
        let mut v: Vec<f64> = all.iter().map(f).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        let k = v.len();
        if k == 0 {
            f64::NAN
        } else if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    };
    Scores { brier: med(|s| s.brier), spherical: med(|s| s.spherical), logarithmic: med(|s| s.logarithmic), zero_one: med(|s| s.zero_one) }
}

/// The two random-effect-free baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmKind {
    /// `logit p = alpha_0 + x'alpha`.
    Plain,
    /// The full autoregressive mean function.
    TimeSeries,
}

/// A fitted logistic regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub kind: GlmKind,
    /// Order of the mean function (zero for [`GlmKind::Plain`]).
    pub order: ModelOrder,
    pub beta: Vec<f64>,
    pub iterations: usize,
    /// Set when the ridge fallback was needed.
    pub ridge: bool,
}

/// Ridge added to `X'WX` when the plain Newton iteration fails.
pub const GLM_RIDGE: f64 = 1e-6;

fn irls(x: &[f64], m: usize, y: &[u8], ridge: f64, max_iter: usize) -> Option<(Vec<f64>, usize)> {
    let rows = y.len();
    let mut beta = vec![0.0; m];
    for it in 1..=max_iter {
        let mut h = vec![0.0; m * m];
        let mut g = vec![0.0; m];
        for k in 0..rows {
            let row = &x[k * m..(k + 1) * m];
            let p = logistic(dot(row, &beta));
            let w = p * (1.0 - p);
            let r = y[k] as f64 - p;
            for a in 0..m {
                g[a] += row[a] * r;
                for b in 0..=a {
                    h[a * m + b] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..m {
            g[a] -= ridge * beta[a];
            h[a * m + a] += ridge;
            for b in 0..a {
                h[b * m + a] = h[a * m + b];
            }
        }
        let step = Cholesky::factor(h, m)?.solve(&g);
        let mut max = 0.0f64;
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
            max = max.max(s.abs());
        }
        if !beta.iter().all(|b| b.is_finite()) {
            return None;
        }
        if max < 1e-10 {
            return Some((beta, it));
        }
    }
    None
}

/// Fits a baseline by iteratively reweighted least squares on the same rows
/// the full model would use (`t = lag+1..T`).
pub fn fit_glm<T: Scalar>(inputs: &InputDesign<T>, panel: &BinaryPanel, order: ModelOrder, kind: GlmKind) -> Result<GlmFit> {
    let dm = build_design(inputs, panel, order)?;
    let d = inputs.d();
    let cols: Vec<usize> = match kind {
        GlmKind::Plain => std::iter::once(0).chain(1 + order.r..1 + order.r + d).collect(),
        GlmKind::TimeSeries => (0..dm.cols()).collect(),
    };
    let m = cols.len();
    let mut x = Vec::with_capacity(dm.rows() * m);
    for k in 0..dm.rows() {
        let row = dm.row(k);
        x.extend(cols.iter().map(|&c| row[c].as_f64()));
    }
    let y = dm.response();
    let fit_order = if kind == GlmKind::Plain { ModelOrder::default() } else { order };
    if let Some((beta, iterations)) = irls(&x, m, y, 0.0, 50) {
        return Ok(GlmFit { kind, order: fit_order, beta, iterations, ridge: false });
    }
    log::warn!("logistic regression did not converge (separation?); refitting with ridge {GLM_RIDGE}");
    let (beta, iterations) =
        irls(&x, m, y, GLM_RIDGE, 200).ok_or_else(|| Error::Singular { columns: vec!["<logistic regression>".into()] })?;
    Ok(GlmFit { kind, order: fit_order, beta, iterations, ridge: true })
}

impl GlmFit {
    /// `p` at input `x` given `history[k-1] = y_{t-k}`.
    pub fn prob<T: Scalar>(&self, x: &[T], history: &[u8]) -> f64 {
        let xf: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
        let mut row = vec![0.0; self.order.columns(xf.len())];
        self.order.row_into(&xf, |k| history.get(k - 1).copied().unwrap_or(0), &mut row);
        logistic(dot(&row, &self.beta))
    }
}

/// One-step-ahead probabilities at every site of `panel` for
/// `t = from..=T`, each conditioning on the observed history.
pub fn one_step_panel<T: Scalar>(
    inputs: &InputDesign<T>,
    panel: &BinaryPanel,
    lag: usize,
    from: usize,
    mut predict: impl FnMut(usize, &[T], &[u8], usize) -> Result<f64>,
) -> Result<ProbPanel<f64>> {
    let t_len = panel.t();
    let mut out = Vec::with_capacity(inputs.n() * (t_len + 1 - from));
    for i in 0..inputs.n() {
        for t in from..=t_len {
            let history: Vec<u8> = (1..=lag).map(|k| if t > k { panel.y(i, t - k) } else { 0 }).collect();
            out.push(predict(i, inputs.site(i), &history, t)?);
        }
    }
    ProbPanel::new(inputs.n(), t_len + 1 - from, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn rmspe_examples() {
        let a = ProbPanel::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(rmspe(&a, &a).unwrap(), 0.0);
        let b = ProbPanel::new(2, 3, a.as_slice().iter().map(|p| p + 0.1).collect()).unwrap();
        assert!((rmspe(&a, &b).unwrap() - 0.1).abs() < 1e-12);
        let c = ProbPanel::new(3, 2, vec![0.0; 6]).unwrap();
        assert!(rmspe(&a, &c).is_err());
    }

    #[test]
    fn score_examples() {
        let eps = 1e-9;
        let s = proper_scores(&[1], &[1.0 - eps], 0.5).unwrap();
        assert!(s.brier.abs() < 1e-12 && s.logarithmic.abs() < 1e-8 && (s.spherical - 1.0).abs() < 1e-8);
        assert_eq!(s.zero_one, 1.0);
        let s = proper_scores(&[1], &[0.5], 0.5).unwrap();
        assert_eq!(s.brier, -0.25);
        assert_eq!(s.zero_one, 1.0);
        let s = proper_scores(&[0], &[0.5], 0.5).unwrap();
        assert_eq!(s.zero_one, 0.0);
        // forecasts at 0 or 1 stay finite
        let s = proper_scores(&[1, 0], &[0.0, 1.0], 0.5).unwrap();
        assert!(s.logarithmic.is_finite());
    }

    #[test]
    fn scores_lie_in_their_ranges() {
        let mut rng = rng_from(3, 0);
        let y: Vec<u8> = (0..500).map(|_| rng.random::<bool>() as u8).collect();
        let p: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let s = proper_scores(&y, &p, 0.5).unwrap();
        assert!((-1.0..=0.0).contains(&s.brier));
        assert!((0.0..=1.0).contains(&s.spherical));
        assert!(s.logarithmic <= 0.0);
        assert!((0.0..=1.0).contains(&s.zero_one));
    }

    #[test]
    fn median_is_the_middle_order_statistic() {
        let all: Vec<Scores> =
            [0.3, -0.1, 0.7, 0.2, 0.5].iter().map(|v| Scores { brier: *v, spherical: *v, logarithmic: *v, zero_one: *v }).collect();
        assert_eq!(median_scores(&all).brier, 0.3);
    }

    proptest! {
        #[test]
        fn expected_scores_peak_at_the_truth(truth in 0.05f64..0.95) {
            // expected score under y ~ Bernoulli(truth), on a grid of forecasts
            let expected = |q: f64| {
                let one = proper_scores(&[1], &[q], 0.5).unwrap();
                let zero = proper_scores(&[0], &[q], 0.5).unwrap();
                let mix = |a: f64, b: f64| truth * a + (1.0 - truth) * b;
                (mix(one.brier, zero.brier), mix(one.spherical, zero.spherical), mix(one.logarithmic, zero.logarithmic), mix(one.zero_one, zero.zero_one))
            };
            let best = expected(truth);
            for k in 1..100 {
                let e = expected(k as f64 / 100.0);
                prop_assert!(e.0 <= best.0 + 1e-12);
                prop_assert!(e.1 <= best.1 + 1e-12);
                prop_assert!(e.2 <= best.2 + 1e-12);
                prop_assert!(e.3 <= best.3 + 1e-12);
            }
        }

        #[test]
        fn rmspe_ignores_consistent_permutation(seed in 0u64..1000) {
            let mut rng = rng_from(seed, 0);
            let a: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
            let perm: Vec<usize> = (0..12).map(|k| (k * 5 + seed as usize) % 12).collect();
            let pa: Vec<f64> = perm.iter().map(|&k| a[k]).collect();
            let pb: Vec<f64> = perm.iter().map(|&k| b[k]).collect();
            let r1 = rmspe(&ProbPanel::new(3, 4, a).unwrap(), &ProbPanel::new(3, 4, b).unwrap()).unwrap();
            let r2 = rmspe(&ProbPanel::new(4, 3, pa).unwrap(), &ProbPanel::new(4, 3, pb).unwrap()).unwrap();
            prop_assert!((r1 - r2).abs() < 1e-14);
        }
    }

    fn logistic_panel(n: usize, t: usize, seed: u64, phi: f64, alpha: f64) -> (InputDesign<f64>, BinaryPanel, Vec<f64>) {
        let mut rng = rng_from(seed, 0);
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut y = vec![0u8; n * t];
        for i in 0..n {
            for s in 0..t {
                let prev = if s > 0 { y[i * t + s - 1] as f64 } else { 0.0 };
                let p = logistic(-0.5 + phi * prev + alpha * xs[i]);
                y[i * t + s] = (rng.random::<f64>() < p) as u8;
            }
        }
        (InputDesign::new(n, 1, xs.clone()).unwrap(), BinaryPanel::new(n, t, y).unwrap(), xs)
    }

    #[test]
    fn baselines_agree_without_signal() {
        let (inputs, panel, xs) = logistic_panel(300, 10, 1, 0.0, 0.0);
        let order = ModelOrder::new(1, 0);
        let plain = fit_glm(&inputs, &panel, order, GlmKind::Plain).unwrap();
        let ts = fit_glm(&inputs, &panel, order, GlmKind::TimeSeries).unwrap();
        assert_eq!(plain.beta.len(), 2);
        assert_eq!(ts.beta.len(), 3);
        for (i, x) in xs.iter().enumerate().take(50) {
            let h = [panel.y(i, 4)];
            assert!((plain.prob(&[*x], &h) - ts.prob(&[*x], &h)).abs() < 0.02);
        }
    }

    #[test]
    fn time_series_baseline_wins_on_its_own_truth() {
        let order = ModelOrder::new(1, 0);
        let mut wins = 0;
        for rep in 0..10u64 {
            let (inputs, panel, xs) = logistic_panel(200, 10, 100 + rep, 1.5, 1.0);
            let truth: Vec<f64> = (0..200)
                .flat_map(|i| (2..=10).map(move |t| (i, t)))
                .map(|(i, t)| logistic(-0.5 + 1.5 * panel.y(i, t - 1) as f64 + xs[i]))
                .collect();
            let truth = ProbPanel::new(200, 9, truth).unwrap();
            let score = |kind| {
                let g = fit_glm(&inputs, &panel, order, kind).unwrap();
                let pred = one_step_panel(&inputs, &panel, 1, 2, |_, x, h, _| Ok(g.prob(x, h))).unwrap();
                rmspe(&truth, &pred).unwrap()
            };
            if score(GlmKind::TimeSeries) <= score(GlmKind::Plain) {
                wins += 1;
            }
        }
        assert!(wins >= 8, "{wins}");
    }

    #[test]
    fn separation_falls_back_to_ridge() {
        let inputs = InputDesign::new(6, 1, vec![0.0, 0.1, 0.2, 0.8, 0.9, 1.0]).unwrap();
        let panel = BinaryPanel::new(6, 1, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let g = fit_glm(&inputs, &panel, ModelOrder::default(), GlmKind::Plain).unwrap();
        assert!(g.ridge);
        assert!(g.beta.iter().all(|b| b.is_finite()));
        assert!(g.prob(&[0.95f64], &[]) > 0.99);
    }
}
