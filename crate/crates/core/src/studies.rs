//! Replicated simulation studies and site-wise cross-validation.
//!
//! Replicates run in parallel, each on a sub-seed derived from the master
//! seed, so results do not depend on the thread count.

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions, FittedModel};
use crate::kernel::KernelSpec;
use crate::metrics::{fit_glm, median_scores, one_step_panel, proper_scores, rmspe, GlmFit, GlmKind, Scores};
use crate::panel::{BinaryPanel, InputDesign, ModelOrder};
use crate::prediction::{emulate_series, mh_sample_probs, sorted_quantile, MhConfig, Predictor};
use crate::seed::{derive_seed, rng_from, stream};
use crate::simgen::{gen_friedman_panel, gen_gp_panel, generate, Generator, SimulatedPanel, TruthSpec};

/// Sub-seed of replicate `r`.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, stream::REPLICATE_BASE + r as u64)
}

/// Sample mean and standard deviation (`n - 1` denominator).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Randomly splits a simulated panel into `n_train` training sites and the rest.
fn random_split(sim: &SimulatedPanel<f64>, n_train: usize, seed: u64) -> (SimulatedPanel<f64>, SimulatedPanel<f64>) {
    let n = sim.inputs.n();
    let mut rng = rng_from(seed, stream::TEST_DATA);
    let mut train = sample_indices(&mut rng, n, n_train).into_vec();
    train.sort_unstable();
    let test: Vec<usize> = (0..n).filter(|i| train.binary_search(i).is_err()).collect();
    (sim.select(&train), sim.select(&test))
}

/// Posterior-mean one-step-ahead RMSPE of a fitted model on held-out sites,
/// over every time step.
pub fn model_rmspe(model: &FittedModel<f64>, test: &SimulatedPanel<f64>, mh: &MhConfig) -> Result<f64> {
    let samples = mh_sample_probs(model, mh)?;
    let pred = Predictor::new(model)?;
    let lag = model.order.lag();
    let p = one_step_panel(&test.inputs, &test.panel, lag, 1, |_, x, h, t| pred.predict_mean(&samples, x, h, t))?;
    rmspe(&test.p, &p)
}

fn glm_rmspe(g: &GlmFit, test: &SimulatedPanel<f64>, lag: usize) -> Result<f64> {
    let p = one_step_panel(&test.inputs, &test.panel, lag, 1, |_, x, h, _| Ok(g.prob(x, h)))?;
    rmspe(&test.p, &p)
}

/// Replicated draws from the five-input reference truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpStudyConfig {
    pub replicates: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub t: usize,
    pub seed: u64,
    pub kernel_power: f64,
    /// Also score one-step-ahead predictions at the test sites.
    pub predict: bool,
    pub mh: MhConfig,
}

impl Default for GpStudyConfig {
    fn default() -> Self {
        Self { replicates: 10, n_train: 200, n_test: 20, t: 20, seed: 1, kernel_power: 2.0, predict: true, mh: MhConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpReplicate {
    pub replicate: usize,
    pub seed: u64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub theta: Vec<f64>,
    pub rmspe: Option<f64>,
}

pub fn gp_replicate(cfg: &GpStudyConfig, r: usize) -> Result<GpReplicate> {
    let seed = replicate_seed(cfg.seed, r);
    let mut truth = TruthSpec::<f64>::reference_gp(seed);
    let lengthscales = truth.cov.as_ref().map(|c| c.theta.clone()).unwrap_or_default();
    truth.kernel = Some(KernelSpec::power_exponential(cfg.kernel_power, lengthscales)?);
    let sim = gen_gp_panel(&truth, cfg.n_train + cfg.n_test, cfg.t)?;
    let (train, test) = random_split(&sim, cfg.n_train, seed);
    let kernel = KernelSpec::power_exponential(cfg.kernel_power, vec![1.0; 5])?;
    let opts = FitOptions { seed, ..Default::default() };
    let model = fit(&train.inputs, &train.panel, truth.order, &kernel, &opts)?;
    let rmspe = if cfg.predict && cfg.n_test > 0 { Some(model_rmspe(&model, &test, &MhConfig { seed, ..cfg.mh })?) } else { None };
    log::info!("replicate {r}: converged={} sigma2={:.3}", model.convergence.converged, model.cov.sigma2);
    Ok(GpReplicate {
        replicate: r,
        seed,
        converged: model.convergence.converged,
        outer_iterations: model.convergence.outer_iterations,
        names: model.coefficient_names.clone(),
        beta: model.beta.clone(),
        sigma2: model.cov.sigma2,
        theta: model.cov.theta.clone(),
        rmspe,
    })
}

pub fn gp_study(cfg: &GpStudyConfig) -> Result<Vec<GpReplicate>> {
    (0..cfg.replicates).into_par_iter().map(|r| gp_replicate(cfg, r)).collect()
}

/// Replicated comparison with the logistic baselines on the Friedman truth.
///
/// Defaults to an exponential kernel (power 1): with power 2 the REML fit
/// collapses to the linear mean on this surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FriedmanConfig {
    pub replicates: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub t: usize,
    pub seed: u64,
    pub kernel_power: f64,
    pub mh: MhConfig,
}

impl Default for FriedmanConfig {
    fn default() -> Self {
        Self { replicates: 10, n_train: 100, n_test: 100, t: 10, seed: 1, kernel_power: 1.0, mh: MhConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanReplicate {
    pub replicate: usize,
    pub seed: u64,
    pub converged: bool,
    pub rmspe_proposed: f64,
    pub rmspe_glm: f64,
    pub rmspe_glm_ts: f64,
}

pub fn friedman_replicate(cfg: &FriedmanConfig, r: usize) -> Result<FriedmanReplicate> {
    let seed = replicate_seed(cfg.seed, r);
    let sim = gen_friedman_panel::<f64>(cfg.n_train + cfg.n_test, cfg.t, seed)?;
    let (train, test) = sim.split(cfg.n_train);
    let order = ModelOrder::new(1, 0);
    let kernel = KernelSpec::power_exponential(cfg.kernel_power, vec![1.0; 5])?;
    let model = fit(&train.inputs, &train.panel, order, &kernel, &FitOptions { seed, ..Default::default() })?;
    let rmspe_proposed = model_rmspe(&model, &test, &MhConfig { seed, ..cfg.mh })?;
    let glm = fit_glm(&train.inputs, &train.panel, order, GlmKind::Plain)?;
    let glm_ts = fit_glm(&train.inputs, &train.panel, order, GlmKind::TimeSeries)?;
    Ok(FriedmanReplicate {
        replicate: r,
        seed,
        converged: model.convergence.converged,
        rmspe_proposed,
        rmspe_glm: glm_rmspe(&glm, &test, 1)?,
        rmspe_glm_ts: glm_rmspe(&glm_ts, &test, 1)?,
    })
}

pub fn friedman_study(cfg: &FriedmanConfig) -> Result<Vec<FriedmanReplicate>> {
    (0..cfg.replicates).into_par_iter().map(|r| friedman_replicate(cfg, r)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Glm,
    GlmTs,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::Glm, Method::GlmTs];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Glm => "glm",
            Method::GlmTs => "glm_ts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub fold: usize,
    pub method: Method,
    pub test_sites: Vec<usize>,
    pub scores: Scores,
    /// The held-out responses contain a single class.
    pub single_class: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub folds: Vec<FoldScores>,
    pub medians: Vec<(Method, Scores)>,
}

/// Assigns each site to one of `folds` folds, balanced and seeded.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed, stream::FOLDS));
    let mut fold = vec![0; n];
    for (k, i) in order.into_iter().enumerate() {
        fold[i] = k % folds;
    }
    fold
}

/// Median over `J` simulated paths of a baseline run forward from `y_0 = 0`.
#[allow(clippy::needless_range_loop)]
fn glm_emulate(g: &GlmFit, x: &[f64], t_len: usize, paths: usize, seed: u64) -> Vec<f64> {
    let lag = g.order.lag();
    let mut p = vec![vec![0.0; paths]; t_len];
    for j in 0..paths {
        let mut rng = rng_from(seed, stream::EMULATE_BASE + j as u64);
        let mut ys: Vec<u8> = Vec::with_capacity(t_len);
        for t in 1..=t_len {
            let history: Vec<u8> = (1..=lag).map(|k| if t > k { ys[t - k - 1] } else { 0 }).collect();
            let pt = g.prob(x, &history);
            p[t - 1][j] = pt;
            ys.push((rng.random::<f64>() < pt) as u8);
        }
    }
    p.into_iter()
        .map(|mut v| {
            v.sort_by(|a, b| a.total_cmp(b));
            sorted_quantile(&v, 0.5)
        })
        .collect()
}

/// Site-wise `folds`-fold cross-validation. Each held-out series is
/// predicted by the pointwise median of emulated paths and scored against
/// its observed responses.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate(
    inputs: &InputDesign<f64>,
    panel: &BinaryPanel,
    order: ModelOrder,
    kernel: &KernelSpec<f64>,
    folds: usize,
    seed: u64,
    methods: &[Method],
    mh: &MhConfig,
) -> Result<ScoreReport> {
    let n = inputs.n();
    if folds < 2 || folds > n {
        return Err(Error::InvalidParameter(format!("need 2 <= folds <= {n}, got {folds}")));
    }
    let assign = fold_assignment(n, folds, seed);
    let per_fold: Vec<Vec<FoldScores>> = (0..folds)
        .into_par_iter()
        .map(|f| -> Result<Vec<FoldScores>> {
            let test: Vec<usize> = (0..n).filter(|i| assign[*i] == f).collect();
            let train: Vec<usize> = (0..n).filter(|i| assign[*i] != f).collect();
            debug_assert!(test.iter().all(|i| !train.contains(i)));
            let (tr_x, tr_y) = (inputs.select(&train), panel.select(&train));
            let fold_seed = derive_seed(seed, stream::FOLDS + ((f as u64 + 1) << 16));
            let y: Vec<u8> = test.iter().flat_map(|&i| panel.series(i).iter().copied()).collect();
            let single_class = y.iter().all(|v| *v == y[0]);
            if single_class {
                log::warn!("fold {f}: held-out responses are all {}", y[0]);
            }
            let mut out = Vec::new();
            for &method in methods {
                let p: Vec<f64> = match method {
                    Method::Proposed => {
                        let model = fit(&tr_x, &tr_y, order, kernel, &FitOptions { seed: fold_seed, ..Default::default() })?;
                        let samples = mh_sample_probs(&model, &MhConfig { seed: fold_seed, ..*mh })?;
                        let pred = Predictor::new(&model)?;
                        let mut p = Vec::new();
                        for (k, &i) in test.iter().enumerate() {
                            let em = emulate_series(&pred, &samples, inputs.site(i), panel.t(), derive_seed(fold_seed, k as u64), &[])?;
                            p.extend(em.median_p());
                        }
                        p
                    }
                    Method::Glm | Method::GlmTs => {
                        let kind = if method == Method::Glm { GlmKind::Plain } else { GlmKind::TimeSeries };
                        let g = fit_glm(&tr_x, &tr_y, order, kind)?;
                        test.iter()
                            .enumerate()
                            .flat_map(|(k, &i)| glm_emulate(&g, inputs.site(i), panel.t(), mh.n_samples, derive_seed(fold_seed, k as u64)))
                            .collect()
                    }
                };
                let scores = proper_scores(&y, &p, 0.5)?;
                out.push(FoldScores { fold: f, method, test_sites: test.clone(), scores, single_class });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let folds: Vec<FoldScores> = per_fold.into_iter().flatten().collect();
    let medians = methods
        .iter()
        .map(|m| {
            let s: Vec<Scores> = folds.iter().filter(|f| f.method == *m).map(|f| f.scores).collect();
            (*m, median_scores(&s))
        })
        .collect();
    Ok(ScoreReport { folds, medians })
}

/// Cross-validation on simulated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub generator: Generator,
    pub n: usize,
    pub t: usize,
    pub folds: usize,
    pub seed: u64,
    pub kernel_power: f64,
    pub mh: MhConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { generator: Generator::Friedman, n: 100, t: 10, folds: 10, seed: 1, kernel_power: 1.0, mh: MhConfig::default() }
    }
}

pub fn cv_study(cfg: &CvConfig) -> Result<ScoreReport> {
    let spec = match cfg.generator {
        Generator::GpModel => TruthSpec::reference_gp(cfg.seed),
        Generator::Friedman => TruthSpec::friedman(cfg.seed),
        Generator::Custom1D => TruthSpec::demo_1d(cfg.seed),
    };
    let sim = generate(&spec, cfg.n, cfg.t)?;
    let order = if cfg.t > 1 { spec.order } else { ModelOrder::default() };
    let kernel = KernelSpec::power_exponential(cfg.kernel_power, vec![1.0; sim.inputs.d()])?;
    cross_validate(&sim.inputs, &sim.panel, order, &kernel, cfg.folds, cfg.seed, &Method::ALL, &cfg.mh)
}
