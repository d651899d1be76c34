//! Command-line driver: dataset generation, estimation, evaluation, Fisher
//! sweeps and fixed experiment reproductions, all configured by JSON.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod reproduce;
pub mod sweep;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use langevin::estimate::{EstimatorConfig, RegimeSpec};
use langevin::metrics::MetricsConfig;
use langevin::LangevinModel;

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "langevin", version, about = "Simulate Langevin SDEs and estimate drift and diffusivity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate trajectory and snapshot datasets for every replicate.
    Generate {
        /// Experiment config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's `output_dir` or `name`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Estimate drift and diffusivity from a snapshot or trajectory CSV.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        /// Estimator config JSON (defaults when absent).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Regime boundaries, e.g. `0,0.5,1`; estimates each regime separately.
        #[arg(long, value_delimiter = ',')]
        regimes: Option<Vec<f64>>,
    },
    /// Score estimation results against the true model.
    Evaluate {
        /// True model JSON.
        #[arg(long)]
        truth: PathBuf,
        /// Result JSON, one per replicate.
        #[arg(long = "result", required = true)]
        results: Vec<PathBuf>,
        /// Metrics config JSON (defaults when absent).
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "model")]
        model_id: String,
        #[arg(long, default_value = "transient")]
        setting: String,
    },
    /// Theoretical and empirical Fisher information over a sweep of initial laws.
    Fisher {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a fixed experiment: table1, fig3, fig6, fig8 or prop1.
    Reproduce {
        name: String,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            out,
            replicates,
            seed,
            samples,
        } => {
            let mut cfg: config::ExperimentConfig = config::load_json(&config)?;
            set(&mut cfg.replicates, replicates);
            set(&mut cfg.seed, seed);
            set(&mut cfg.n_samples, samples);
            let dir = commands::generate(&cfg, out.as_deref())?;
            println!("{}", dir.display());
        }
        Command::Estimate {
            data,
            config,
            out,
            seed,
            regimes,
        } => {
            let mut cfg: EstimatorConfig = match config {
                Some(p) => config::load_json(&p)?,
                None => EstimatorConfig::default(),
            };
            set(&mut cfg.seed, seed);
            let regimes = regimes.map(RegimeSpec::new).transpose()?;
            let path = commands::estimate(&data, &cfg, regimes.as_ref(), &out)?;
            println!("{}", path.display());
        }
        Command::Evaluate {
            truth,
            results,
            metrics,
            out,
            model_id,
            setting,
        } => {
            let truth: LangevinModel = config::load_json(&truth)?;
            let metrics: MetricsConfig = match metrics {
                Some(p) => config::load_json(&p)?,
                None => MetricsConfig::default(),
            };
            let summary = commands::evaluate(&truth, &results, &metrics, &model_id, &setting, &out)?;
            print!("{}", commands::summary_csv(&summary));
        }
        Command::Fisher {
            config,
            out,
            replicates,
            seed,
        } => {
            let mut cfg: sweep::FisherConfig = config::load_json(&config)?;
            set(&mut cfg.replicates, replicates);
            set(&mut cfg.seed, seed);
            let (dir, trends) = sweep::fisher(&cfg, out.as_deref())?;
            println!("{}", dir.display());
            println!("{}", serde_json::to_string(&trends).unwrap_or_default());
        }
        Command::Reproduce {
            name,
            replicates,
            samples,
        } => {
            let dir = reproduce::reproduce(&name, reproduce::Overrides { replicates, samples })?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}
