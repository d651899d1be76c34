//! `generate`, `estimate` and `evaluate`.

use std::path::{Path, PathBuf};

use langevin::estimate::{appex_estimate, estimate_piecewise, mle_from_trajectories_with_floor, EstimationResult, EstimatorConfig, RegimeSpec};
use langevin::io::{read_snapshots_csv, read_trajectories_csv, write_snapshots_csv, write_trajectories_csv};
use langevin::metrics::{
    cosine_similarity, diffusivity_mae, drift_mae_with, gibbs_eval_points, grid_points, mean_sd, rows_to_csv, MetricRow,
    MetricsConfig,
};
use langevin::sim::{sample_initial, shuffle_to_snapshots, simulate, SnapshotSeries, TrajectorySet};
use langevin::LangevinModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{replicate_seed, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::output::{resolve, OutputDir};

/// One simulated replicate: coupled trajectories and their shuffled snapshots.
pub struct Dataset {
    pub trajectories: TrajectorySet,
    pub snapshots: SnapshotSeries,
    pub seed: u64,
}

pub fn simulate_replicate(cfg: &ExperimentConfig, r: usize) -> Result<Dataset> {
    let seed = replicate_seed(cfg.seed, r);
    let init = sample_initial(&cfg.init, cfg.model.dim(), cfg.n_samples, seed)?;
    let (grid, obs) = cfg.schedule.simulation_grid()?;
    let full = simulate(&cfg.model, init.view(), &grid, seed)?;
    let trajectories = if obs.len() == grid.len() { full } else { full.select_times(&obs)? };
    let snapshots = shuffle_to_snapshots(&trajectories, seed);
    Ok(Dataset {
        trajectories,
        snapshots,
        seed,
    })
}

pub fn replicate_dir(r: usize) -> String {
    format!("replicate_{r}")
}

/// Writes `replicate_<r>/{trajectories,snapshots}.csv` for every replicate
/// plus `manifest.json`; returns the output directory.
pub fn generate(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(cfg.output_dir()));
    let mut out = OutputDir::create(resolve(&dir))?;
    let encoded: Vec<(u64, Vec<u8>, Vec<u8>)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let data = simulate_replicate(cfg, r)?;
            let mut traj = Vec::new();
            write_trajectories_csv(&data.trajectories, &mut traj)?;
            let mut snap = Vec::new();
            write_snapshots_csv(&data.snapshots, &mut snap)?;
            Ok((data.seed, traj, snap))
        })
        .collect::<Result<_>>()?;
    for (r, (seed, traj, snap)) in encoded.into_iter().enumerate() {
        let sub = replicate_dir(r);
        out.seed(sub.clone(), seed);
        out.write(&format!("{sub}/trajectories.csv"), &traj)?;
        out.write(&format!("{sub}/snapshots.csv"), &snap)?;
    }
    let path = out.path().to_path_buf();
    out.finish("generate", cfg)?;
    Ok(path)
}

/// Dataset kinds recognized from the CSV header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Snapshots,
    Trajectories,
}

pub fn detect_kind(path: &Path) -> Result<DataKind> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let header = text.lines().next().unwrap_or("");
    if header.starts_with("time,sample_id") {
        Ok(DataKind::Snapshots)
    } else if header.starts_with("path_id,time") {
        Ok(DataKind::Trajectories)
    } else {
        Err(CliError::Config(format!(
            "{}: line 1: unrecognized header {header:?}; expected time,sample_id,... or path_id,time,...",
            path.display()
        )))
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| CliError::io(path, e))
}

fn with_path(path: &Path, e: langevin::Error) -> CliError {
    match CliError::from(e) {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Estimates from one dataset: the alternating marginal estimator for
/// snapshot files (with the stationarity diagnostic attached), the
/// trajectory MLE for trajectory files.
pub fn estimate_file(data: &Path, cfg: &EstimatorConfig, regimes: Option<&RegimeSpec>) -> Result<Vec<EstimationResult>> {
    cfg.validate()?;
    match detect_kind(data)? {
        DataKind::Snapshots => {
            let series = read_snapshots_csv(open(data)?).map_err(|e| with_path(data, e))?;
            match regimes {
                Some(spec) => Ok(estimate_piecewise(&series, spec, cfg)?),
                None => {
                    let mut res = appex_estimate(&series, cfg)?;
                    res.attach_stationarity(&series, cfg.permutations, cfg.seed)?;
                    Ok(vec![res])
                }
            }
        }
        DataKind::Trajectories => {
            if regimes.is_some() {
                return Err(CliError::Config("regimes apply to snapshot datasets only".into()));
            }
            let trajs = read_trajectories_csv(open(data)?).map_err(|e| with_path(data, e))?;
            let mut res = mle_from_trajectories_with_floor(&trajs, cfg.degree, cfg.sigma2_floor)?;
            res.config = Some(cfg.clone());
            Ok(vec![res])
        }
    }
}

#[derive(Serialize)]
struct EstimateRecord<'a> {
    data: String,
    config: &'a EstimatorConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    regimes: Option<&'a RegimeSpec>,
}

/// Writes `result.json` (one result, or a list when regimes are given).
pub fn estimate(data: &Path, cfg: &EstimatorConfig, regimes: Option<&RegimeSpec>, out: &Path) -> Result<PathBuf> {
    let results = estimate_file(data, cfg, regimes)?;
    let mut dir = OutputDir::create(resolve(out))?;
    dir.seed("estimator", cfg.seed);
    let path = if regimes.is_some() {
        dir.write_json("result.json", &results)?
    } else {
        dir.write_json("result.json", &results[0])?
    };
    dir.finish(
        "estimate",
        &EstimateRecord {
            data: data.display().to_string(),
            config: cfg,
            regimes,
        },
    )?;
    Ok(path)
}

/// Metric rows of one estimate against the truth.
pub fn metric_rows(
    truth: &LangevinModel,
    est: &EstimationResult,
    cfg: &MetricsConfig,
    gibbs_points: &ndarray::Array2<f64>,
    model_id: &str,
    setting: &str,
    replicate: usize,
) -> Result<Vec<MetricRow>> {
    let est_model = est.model()?;
    let grid = grid_points(cfg.grid_half_length, cfg.grid_per_axis, truth.dim())?;
    let row = |metric: &str, value: f64| MetricRow {
        model_id: model_id.to_string(),
        setting: setting.to_string(),
        metric: metric.to_string(),
        value,
        replicate,
    };
    Ok(vec![
        row(
            "drift_mae_grid",
            drift_mae_with(&truth.potential, &est_model.potential, grid.view(), cfg.componentwise)?,
        ),
        row(
            "drift_mae_gibbs",
            drift_mae_with(&truth.potential, &est_model.potential, gibbs_points.view(), cfg.componentwise)?,
        ),
        row("cosine_grid", cosine_similarity(&truth.potential, &est_model.potential, grid.view())?.mean),
        row("diffusivity_mae", diffusivity_mae(truth.sigma2, est.sigma2_hat)),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model_id: String,
    pub setting: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Mean and standard deviation over replicates for every (model, setting, metric).
pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in rows {
        let k = (r.model_id.clone(), r.setting.clone(), r.metric.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(model_id, setting, metric)| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.model_id == model_id && r.setting == setting && r.metric == metric)
                .map(|r| r.value)
                .collect();
            let (mean, sd) = mean_sd(&v);
            SummaryRow {
                model_id,
                setting,
                metric,
                n: v.len(),
                mean,
                sd,
            }
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("model_id,setting,metric,n,mean,sd,formatted\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:?},{:?},{:.2} ± {:.2}\n",
            r.model_id, r.setting, r.metric, r.n, r.mean, r.sd, r.mean, r.sd
        ));
    }
    s
}

#[derive(Serialize)]
struct MetricsReport<'a> {
    rows: &'a [MetricRow],
    summary: &'a [SummaryRow],
}

#[derive(Serialize)]
struct EvaluateRecord<'a> {
    truth: &'a LangevinModel,
    results: Vec<String>,
    metrics: &'a MetricsConfig,
    model_id: &'a str,
    setting: &'a str,
}

/// Scores each result file (one replicate each) against `truth`; writes
/// `metrics.csv`, `summary.csv` and `metrics.json`.
pub fn evaluate(
    truth: &LangevinModel,
    results: &[PathBuf],
    cfg: &MetricsConfig,
    model_id: &str,
    setting: &str,
    out: &Path,
) -> Result<Vec<SummaryRow>> {
    truth.validate()?;
    if results.is_empty() {
        return Err(CliError::Config("evaluate needs at least one result file".into()));
    }
    let parsed: Vec<EstimationResult> = results.iter().map(|p| crate::config::load_json(p)).collect::<Result<_>>()?;
    for (p, r) in results.iter().zip(&parsed) {
        if r.dim != truth.dim() {
            return Err(CliError::Config(format!(
                "{}: result has dimension {} but the true model has dimension {}",
                p.display(),
                r.dim,
                truth.dim()
            )));
        }
    }
    let gibbs = gibbs_eval_points(truth, cfg.gibbs_points, cfg.seed)?;
    let mut rows = Vec::new();
    for (rep, r) in parsed.iter().enumerate() {
        rows.extend(metric_rows(truth, r, cfg, &gibbs, model_id, setting, rep)?);
    }
    let summary = summarize(&rows);
    let mut dir = OutputDir::create(resolve(out))?;
    dir.seed("gibbs_points", cfg.seed);
    dir.write("metrics.csv", rows_to_csv(&rows).as_bytes())?;
    dir.write("summary.csv", summary_csv(&summary).as_bytes())?;
    dir.write_json(
        "metrics.json",
        &MetricsReport {
            rows: &rows,
            summary: &summary,
        },
    )?;
    dir.finish(
        "evaluate",
        &EvaluateRecord {
            truth,
            results: results.iter().map(|p| p.display().to_string()).collect(),
            metrics: cfg,
            model_id,
            setting,
        },
    )?;
    Ok(summary)
}

/// Simulates, estimates from marginals and scores every replicate of `cfg`
/// without touching the disk. Replicates run concurrently.
pub fn run_cell(cfg: &ExperimentConfig) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let gibbs = gibbs_eval_points(&cfg.model, cfg.metrics.gibbs_points, cfg.metrics.seed)?;
    let model_id = format!("{}_s{}", cfg.model.potential.label(), cfg.model.sigma2);
    let parts: Vec<Vec<MetricRow>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let data = simulate_replicate(cfg, r)?;
            let est = appex_estimate(&data.snapshots, &cfg.estimator)?;
            metric_rows(&cfg.model, &est, &cfg.metrics, &gibbs, &model_id, cfg.setting.as_str(), r)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}
