use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use binarygp::prediction::MhConfig;
use binarygp::simgen::Generator;

mod commands;
mod config;
mod output;

use config::{BenchmarkConfig, Command, EmulateConfig, FitConfig, PredictConfig, RunConfig, SimulateConfig, CONFIG_SCHEMA_VERSION};

/// Generalized Gaussian process models for binary time series.
#[derive(Debug, Parser)]
#[command(name = "binarygp", version)]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Draw a synthetic panel from a known truth.
    Simulate {
        #[arg(long, value_enum, default_value_t = GeneratorArg::Gp)]
        generator: GeneratorArg,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        t: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        kernel_power: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Estimate a model from an inputs CSV and a binary panel CSV.
    Fit {
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        panel: PathBuf,
        /// Input files have no header row.
        #[arg(long)]
        no_header: bool,
        #[arg(long, default_value_t = 1)]
        order_r: usize,
        #[arg(long, default_value_t = 0)]
        order_l: usize,
        #[arg(long, default_value_t = 2.0)]
        kernel_power: f64,
        /// Rescale every input column to [0, 1] before fitting.
        #[arg(long)]
        standardize: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Predictive distribution of p at new inputs.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Query inputs, one row per point.
        #[arg(long)]
        inputs: PathBuf,
        /// Observed 0/1 series at the query points, one row per point.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        no_header: bool,
        /// Time step to predict (default: one past the history).
        #[arg(long)]
        time: Option<usize>,
        #[command(flatten)]
        mh: MhArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.025, 0.5, 0.975])]
        quantiles: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Simulate a new binary series at one input.
    Emulate {
        #[arg(long)]
        model: PathBuf,
        /// Comma separated input coordinates.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        x: Vec<f64>,
        #[arg(long)]
        t_out: usize,
        #[command(flatten)]
        mh: MhArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.025, 0.5, 0.975])]
        quantiles: Vec<f64>,
        /// Also write every emulated path.
        #[arg(long)]
        write_paths: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run a replicated simulation study.
    Benchmark {
        #[arg(value_enum)]
        study: StudyArg,
        /// JSON overrides for the study settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Replay the config.json echoed by an earlier run.
    Rerun {
        #[arg(long)]
        config: PathBuf,
        /// Write to this directory instead of the recorded one.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct MhArgs {
    #[arg(long, default_value_t = 1000)]
    mh_samples: usize,
    #[arg(long, default_value_t = 500)]
    mh_burnin: usize,
    #[arg(long, default_value_t = 2)]
    mh_thin: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl From<MhArgs> for MhConfig {
    fn from(a: MhArgs) -> Self {
        MhConfig { n_samples: a.mh_samples, burn_in: a.mh_burnin, thin: a.mh_thin, seed: a.seed }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Gp,
    Friedman,
    Demo1d,
}

impl From<GeneratorArg> for Generator {
    fn from(g: GeneratorArg) -> Self {
        match g {
            GeneratorArg::Gp => Generator::GpModel,
            GeneratorArg::Friedman => Generator::Friedman,
            GeneratorArg::Demo1d => Generator::Custom1D,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StudyArg {
    Table1,
    Table3,
    Friedman,
    CvScores,
}

fn to_run_config(cmd: Cmd) -> anyhow::Result<RunConfig> {
    let command = match cmd {
        Cmd::Simulate { generator, n, t, seed, kernel_power, out_dir } => {
            Command::Simulate(SimulateConfig { generator: generator.into(), n, t, seed, kernel_power, out_dir })
        }
        Cmd::Fit { inputs, panel, no_header, order_r, order_l, kernel_power, standardize, seed, out_dir } => {
            Command::Fit(FitConfig { inputs, panel, has_header: !no_header, order_r, order_l, kernel_power, standardize, seed, out_dir })
        }
        Cmd::Predict { model, inputs, history, no_header, time, mh, quantiles, out_dir } => {
            Command::Predict(PredictConfig { model, inputs, history, has_header: !no_header, time, mh: mh.into(), quantiles, out_dir })
        }
        Cmd::Emulate { model, x, t_out, mh, quantiles, write_paths, out_dir } => {
            Command::Emulate(EmulateConfig { model, x, t_out, mh: mh.into(), quantiles, write_paths, out_dir })
        }
        Cmd::Benchmark { study, config, out_dir } => {
            Command::Benchmark(BenchmarkConfig { study: commands::study_config(study, config.as_deref())?, out_dir })
        }
        Cmd::Rerun { config, out_dir } => {
            let mut cfg = config::read_config(&config)?;
            if let Some(dir) = out_dir {
                cfg.command.set_out_dir(dir);
            }
            return Ok(cfg);
        }
    };
    Ok(RunConfig { schema_version: CONFIG_SCHEMA_VERSION, command })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BINARYGP_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = to_run_config(cli.command).and_then(|cfg| commands::run(&cfg));
    match outcome {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::NotConverged) => {
            eprintln!("warning: the fit did not converge; outputs were written but should not be trusted");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
