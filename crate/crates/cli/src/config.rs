//! Declarative experiment configuration.

use std::path::Path;

use langevin::estimate::EstimatorConfig;
use langevin::metrics::MetricsConfig;
use langevin::rng::{derive_seed, tag};
use langevin::sim::{uniform_times, InitialDistribution};
use langevin::LangevinModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    #[default]
    Transient,
    Stationary,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Transient => "transient",
            Setting::Stationary => "stationary",
        }
    }
}

/// Observation times: either `dt` with `n_steps`, or an explicit list.
/// `substeps` integrates each observation interval with that many
/// Euler–Maruyama steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub substeps: usize,
}

fn one() -> usize {
    1
}

fn default_samples() -> usize {
    1000
}

impl Schedule {
    pub fn uniform(dt: f64, n_steps: usize) -> Self {
        Schedule {
            dt: Some(dt),
            n_steps: Some(n_steps),
            times: None,
            substeps: 1,
        }
    }

    /// Observation times.
    pub fn times(&self) -> Result<Vec<f64>> {
        let times = match (&self.times, self.dt, self.n_steps) {
            (Some(t), None, None) => t.clone(),
            (None, Some(dt), Some(n)) => {
                if !(dt > 0.0 && dt.is_finite()) || n == 0 {
                    return Err(CliError::Config("schedule needs dt > 0 and n_steps ≥ 1".into()));
                }
                uniform_times(dt, n)
            }
            _ => {
                return Err(CliError::Config(
                    "schedule must give either `times` or both `dt` and `n_steps`".into(),
                ))
            }
        };
        if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(CliError::Config(
                "schedule times must start at 0 and increase strictly, with at least two entries".into(),
            ));
        }
        Ok(times)
    }

    /// Simulation grid (observation times refined by `substeps`) and the
    /// indices of the observation times within it.
    pub fn simulation_grid(&self) -> Result<(Vec<f64>, Vec<usize>)> {
        if self.substeps == 0 {
            return Err(CliError::Config("substeps must be at least 1".into()));
        }
        let obs = self.times()?;
        let mut grid = vec![obs[0]];
        let mut idx = vec![0];
        for w in obs.windows(2) {
            let h = (w[1] - w[0]) / self.substeps as f64;
            for s in 1..self.substeps {
                grid.push(w[0] + s as f64 * h);
            }
            grid.push(w[1]);
            idx.push(grid.len() - 1);
        }
        Ok((grid, idx))
    }
}

/// One cell of an experiment matrix: model, data protocol and replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: LangevinModel,
    pub init: InitialDistribution,
    pub schedule: Schedule,
    #[serde(default)]
    pub setting: Setting,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Relative paths are resolved against the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if self.n_samples == 0 {
            return Err(CliError::Config("n_samples must be at least 1".into()));
        }
        self.model.validate()?;
        self.init.validate(self.model.dim())?;
        self.schedule.simulation_grid()?;
        self.estimator.validate()?;
        match (self.setting, self.init.is_gibbs()) {
            (Setting::Stationary, false) => Err(CliError::Config(
                "the stationary setting needs a Gibbs initial distribution (Metropolis or burn-in sampler)".into(),
            )),
            (Setting::Transient, true) => Err(CliError::Config(
                "the transient setting cannot start from the Gibbs distribution".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn output_dir(&self) -> String {
        self.output_dir.clone().unwrap_or_else(|| self.name.clone())
    }
}

/// Seed of replicate `r` derived from a base seed.
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    derive_seed(base.wrapping_add(r as u64), tag::REPLICATE)
}

/// Parses a JSON file, reporting the line and column of syntax and schema errors.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        let msg = full.rsplit_once(" at line ").map_or(full.as_str(), |(m, _)| m);
        CliError::Config(format!("line {} column {}: {msg}", e.line(), e.column()))
    })
}
