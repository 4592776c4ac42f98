//! Command implementations. Each reads only its configuration and writes
//! into the configured output directory.

use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use binarygp::estimation::{fit, FitOptions, FittedModel};
use binarygp::inference::coef_report;
use binarygp::kernel::KernelSpec;
use binarygp::panel::{load_binary_panel, load_inputs, load_panel, CsvOptions, ModelOrder};
use binarygp::prediction::{emulate_series, mh_sample_probs, sorted_quantile, Predictor};
use binarygp::simgen::{generate, Generator, TruthSpec};
use binarygp::studies::{cv_study, friedman_study, gp_study, mean_sd, CvConfig, FriedmanConfig, GpStudyConfig};

use crate::config::{write_config, BenchmarkConfig, Command, EmulateConfig, FitConfig, PredictConfig, RunConfig, SimulateConfig, Study};
use crate::output::{num, numbered, quantile_label, write_csv, write_json};
use crate::StudyArg;

pub enum Outcome {
    Done,
    NotConverged,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    write_config(cfg)?;
    match &cfg.command {
        Command::Simulate(c) => simulate(c),
        Command::Fit(c) => fit_cmd(c),
        Command::Predict(c) => predict(c),
        Command::Emulate(c) => emulate(c),
        Command::Benchmark(c) => benchmark(c),
    }
}

fn simulate(c: &SimulateConfig) -> Result<Outcome> {
    let mut spec = match c.generator {
        Generator::GpModel => TruthSpec::<f64>::reference_gp(c.seed),
        Generator::Friedman => TruthSpec::friedman(c.seed),
        Generator::Custom1D => TruthSpec::demo_1d(c.seed),
    };
    if let (Some(k), Some(cov)) = (spec.kernel.as_mut(), spec.cov.as_ref()) {
        *k = KernelSpec::power_exponential(c.kernel_power, cov.theta.clone())?;
    }
    let sim = generate(&spec, c.n, c.t)?;
    let (n, d, t) = (sim.inputs.n(), sim.inputs.d(), sim.panel.t());
    let dir = &c.out_dir;
    let inputs: Vec<Vec<String>> = sim.inputs.sites().map(|x| x.iter().map(|v| num(*v)).collect()).collect();
    write_csv(&dir.join("inputs.csv"), &numbered("x", d), &inputs)?;
    let panel: Vec<Vec<String>> = (0..n).map(|i| sim.panel.series(i).iter().map(|y| y.to_string()).collect()).collect();
    write_csv(&dir.join("panel.csv"), &numbered("y", t), &panel)?;
    let p: Vec<Vec<String>> = (0..n).map(|i| sim.p.series(i).iter().map(|v| num(*v)).collect()).collect();
    write_csv(&dir.join("true_p.csv"), &numbered("p", t), &p)?;
    write_json(&dir.join("truth.json"), &spec)?;
    Ok(Outcome::Done)
}

fn fit_cmd(c: &FitConfig) -> Result<Outcome> {
    let opts = CsvOptions { has_header: c.has_header };
    let (raw, panel) = load_panel::<f64>(&c.inputs, &c.panel, opts)
        .with_context(|| format!("loading {} and {}", c.inputs.display(), c.panel.display()))?;
    let order = ModelOrder::new(c.order_r, c.order_l);
    let (inputs, scaling) = if c.standardize {
        let ranges = raw.column_ranges();
        (raw.scaled(&ranges)?, Some(ranges))
    } else {
        (raw, None)
    };
    let kernel = KernelSpec::power_exponential(c.kernel_power, vec![1.0; inputs.d()])?;
    let fit_opts = FitOptions { seed: c.seed, ..Default::default() };
    let mut model = fit(&inputs, &panel, order, &kernel, &fit_opts)?;
    model.input_scaling = scaling;

    let dir = &c.out_dir;
    std::fs::write(dir.join("model.json"), model.to_json()? + "\n")?;
    let report = coef_report(&model)?;
    report.write_csv(File::create(dir.join("coefficients.csv"))?)?;
    write_json(&dir.join("convergence.json"), &model.convergence)?;
    if !report.singular_columns.is_empty() {
        log::warn!("information matrix is singular in: {}", report.singular_columns.join(", "));
    }
    Ok(if model.convergence.converged { Outcome::Done } else { Outcome::NotConverged })
}

fn load_model(path: &Path) -> Result<FittedModel<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    FittedModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if let Some(q) = levels.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        bail!("quantile level {q} is outside [0, 1]");
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictionRecord {
    point: usize,
    x: Vec<f64>,
    time: usize,
    #[serde(flatten)]
    summary: binarygp::prediction::PredictiveSummary,
}

fn predict(c: &PredictConfig) -> Result<Outcome> {
    check_levels(&c.quantiles)?;
    let model = load_model(&c.model)?;
    let opts = CsvOptions { has_header: c.has_header };
    let query = load_inputs::<f64>(&c.inputs, opts).with_context(|| format!("loading {}", c.inputs.display()))?;
    if query.d() != model.inputs.d() {
        bail!("query inputs have {} columns but the model expects {}", query.d(), model.inputs.d());
    }
    let history = match &c.history {
        Some(p) => {
            let h = load_binary_panel(p, opts).with_context(|| format!("loading {}", p.display()))?;
            if h.n() != query.n() {
                bail!("history has {} rows but there are {} query points", h.n(), query.n());
            }
            Some(h)
        }
        None => None,
    };
    let seen = history.as_ref().map_or(0, |h| h.t());
    let s = c.time.unwrap_or(seen + 1);
    if s == 0 {
        bail!("time steps start at 1");
    }
    let lag = model.order.lag();
    let samples = mh_sample_probs(&model, &c.mh)?;
    let pred = Predictor::new(&model)?;
    let mut records = Vec::with_capacity(query.n());
    for i in 0..query.n() {
        let lags: Vec<u8> = (1..=lag)
            .map(|k| match &history {
                Some(h) if s > k && s - k <= h.t() => h.y(i, s - k),
                _ => 0,
            })
            .collect();
        let summary = pred.predict(&samples, query.site(i), &lags, s, &c.quantiles)?;
        records.push(PredictionRecord { point: i + 1, x: query.site(i).to_vec(), time: s, summary });
    }

    let mut header = vec!["point".to_string(), "time".into(), "mean".into(), "variance".into()];
    header.extend(c.quantiles.iter().map(|q| quantile_label(*q)));
    header.extend(["acceptance_rate".to_string(), "max_rhat".into()]);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![r.point.to_string(), r.time.to_string(), num(r.summary.mean), num(r.summary.variance)];
            row.extend(r.summary.quantiles.iter().map(|q| num(q.value)));
            row.extend([num(r.summary.acceptance_rate), num(r.summary.max_rhat)]);
            row
        })
        .collect();
    write_csv(&c.out_dir.join("predictions.csv"), &header, &rows)?;
    write_json(&c.out_dir.join("predictions.json"), &records)?;
    Ok(Outcome::Done)
}

fn emulate(c: &EmulateConfig) -> Result<Outcome> {
    check_levels(&c.quantiles)?;
    let model = load_model(&c.model)?;
    if c.x.len() != model.inputs.d() {
        bail!("--x has {} coordinates but the model expects {}", c.x.len(), model.inputs.d());
    }
    let samples = mh_sample_probs(&model, &c.mh)?;
    let pred = Predictor::new(&model)?;
    let em = emulate_series(&pred, &samples, &c.x, c.t_out, c.mh.seed, &c.quantiles)?;

    let mut header = vec!["t".to_string(), "mean_p".into(), "median_p".into(), "median_y".into()];
    header.extend(c.quantiles.iter().map(|q| quantile_label(*q)));
    let rows: Vec<Vec<String>> = em
        .steps
        .iter()
        .map(|s| {
            let mut row = vec![s.t.to_string(), num(s.mean_p), num(s.median_p), s.median_y.to_string()];
            row.extend(s.bands.iter().map(|b| num(b.value)));
            row
        })
        .collect();
    write_csv(&c.out_dir.join("emulation.csv"), &header, &rows)?;
    if c.write_paths {
        let t = c.t_out;
        let p: Vec<Vec<String>> = em.p_paths.iter().map(|r| r.iter().map(|v| num(*v)).collect()).collect();
        write_csv(&c.out_dir.join("paths_p.csv"), &numbered("p", t), &p)?;
        let y: Vec<Vec<String>> = em.y_paths.iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
        write_csv(&c.out_dir.join("paths_y.csv"), &numbered("y", t), &y)?;
    }
    Ok(Outcome::Done)
}

/// Default settings for a named study, overridden field by field from a
/// JSON file.
pub fn study_config(study: StudyArg, overrides: Option<&Path>) -> Result<Study> {
    fn merge(base: &mut Value, over: Value) {
        match (base, over) {
            (Value::Object(b), Value::Object(o)) => {
                for (k, v) in o {
                    match b.get_mut(&k) {
                        Some(slot) => merge(slot, v),
                        None => {
                            b.insert(k, v);
                        }
                    }
                }
            }
            (slot, v) => *slot = v,
        }
    }
    let mut base = match study {
        StudyArg::Table1 => serde_json::to_value(GpStudyConfig { predict: false, ..Default::default() })?,
        StudyArg::Table3 => serde_json::to_value(GpStudyConfig::default())?,
        StudyArg::Friedman => serde_json::to_value(FriedmanConfig::default())?,
        StudyArg::CvScores => serde_json::to_value(CvConfig::default())?,
    };
    if let Some(path) = overrides {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let over: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        merge(&mut base, over);
    }
    let parsed = match study {
        StudyArg::Table1 => Study::Table1(serde_json::from_value(base)?),
        StudyArg::Table3 => Study::Table3(serde_json::from_value(base)?),
        StudyArg::Friedman => Study::Friedman(serde_json::from_value(base)?),
        StudyArg::CvScores => Study::CvScores(serde_json::from_value(base)?),
    };
    Ok(parsed)
}

#[derive(Serialize)]
struct Stat {
    name: String,
    mean: f64,
    sd: f64,
    median: f64,
}

fn stat(name: &str, v: &[f64]) -> Stat {
    let (mean, sd) = mean_sd(v);
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    Stat { name: name.to_string(), mean, sd, median: sorted_quantile(&sorted, 0.5) }
}

fn benchmark(c: &BenchmarkConfig) -> Result<Outcome> {
    let dir = &c.out_dir;
    match &c.study {
        Study::Table1(g) | Study::Table3(g) => {
            let reps = gp_study(g)?;
            let Some(first) = reps.first() else { bail!("the study needs at least one replicate") };
            let names = first.names.clone();
            let d = first.theta.len();
            let mut header = vec!["replicate".to_string(), "seed".into(), "converged".into(), "outer_iterations".into()];
            header.extend(names.iter().cloned());
            header.push("sigma2".into());
            header.extend(numbered("theta", d));
            header.push("rmspe".into());
            let rows: Vec<Vec<String>> = reps
                .iter()
                .map(|r| {
                    let mut row =
                        vec![r.replicate.to_string(), r.seed.to_string(), r.converged.to_string(), r.outer_iterations.to_string()];
                    row.extend(r.beta.iter().map(|v| num(*v)));
                    row.push(num(r.sigma2));
                    row.extend(r.theta.iter().map(|v| num(*v)));
                    row.push(r.rmspe.map_or_else(|| "NA".into(), num));
                    row
                })
                .collect();
            write_csv(&dir.join("results.csv"), &header, &rows)?;
            let mut stats: Vec<Stat> =
                names.iter().enumerate().map(|(k, n)| stat(n, &reps.iter().map(|r| r.beta[k]).collect::<Vec<_>>())).collect();
            stats.push(stat("sigma2", &reps.iter().map(|r| r.sigma2).collect::<Vec<_>>()));
            for k in 0..d {
                stats.push(stat(&format!("theta{}", k + 1), &reps.iter().map(|r| r.theta[k]).collect::<Vec<_>>()));
            }
            let rmspe: Vec<f64> = reps.iter().filter_map(|r| r.rmspe).collect();
            if !rmspe.is_empty() {
                stats.push(stat("rmspe", &rmspe));
            }
            let converged = reps.iter().filter(|r| r.converged).count();
            write_json(
                &dir.join("summary.json"),
                &serde_json::json!({ "replicates": reps.len(), "converged": converged, "stats": stats }),
            )?;
        }
        Study::Friedman(f) => {
            let reps = friedman_study(f)?;
            let header: Vec<String> =
                ["replicate", "seed", "converged", "rmspe_proposed", "rmspe_glm", "rmspe_glm_ts"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = reps
                .iter()
                .map(|r| {
                    vec![
                        r.replicate.to_string(),
                        r.seed.to_string(),
                        r.converged.to_string(),
                        num(r.rmspe_proposed),
                        num(r.rmspe_glm),
                        num(r.rmspe_glm_ts),
                    ]
                })
                .collect();
            write_csv(&dir.join("results.csv"), &header, &rows)?;
            let col = |f: fn(&binarygp::studies::FriedmanReplicate) -> f64| reps.iter().map(f).collect::<Vec<_>>();
            let stats = vec![
                stat("rmspe_proposed", &col(|r| r.rmspe_proposed)),
                stat("rmspe_glm", &col(|r| r.rmspe_glm)),
                stat("rmspe_glm_ts", &col(|r| r.rmspe_glm_ts)),
            ];
            let wins = reps.iter().filter(|r| r.rmspe_proposed < r.rmspe_glm && r.rmspe_proposed < r.rmspe_glm_ts).count();
            write_json(&dir.join("summary.json"), &serde_json::json!({ "replicates": reps.len(), "proposed_best": wins, "stats": stats }))?;
        }
        Study::CvScores(cv) => {
            let report = cv_study(cv)?;
            let header: Vec<String> =
                ["fold", "method", "brier", "spherical", "logarithmic", "zero_one", "single_class"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = report
                .folds
                .iter()
                .map(|f| {
                    vec![
                        f.fold.to_string(),
                        f.method.name().to_string(),
                        num(f.scores.brier),
                        num(f.scores.spherical),
                        num(f.scores.logarithmic),
                        num(f.scores.zero_one),
                        f.single_class.to_string(),
                    ]
                })
                .collect();
            write_csv(&dir.join("results.csv"), &header, &rows)?;
            let medians: Vec<Value> = report.medians.iter().map(|(m, s)| serde_json::json!({ "method": m.name(), "median": s })).collect();
            write_json(&dir.join("summary.json"), &serde_json::json!({ "folds": cv.folds, "medians": medians }))?;
        }
    }
    Ok(Outcome::Done)
}
