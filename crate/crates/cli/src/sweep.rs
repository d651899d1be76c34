//! `fisher`: single-step sweeps over initial distributions comparing
//! theoretical and empirical Fisher information, and estimation error from
//! trajectories against estimation error from marginals.

use std::path::{Path, PathBuf};

use langevin::estimate::{appex_estimate, mle_from_trajectories_with_floor, sinkhorn_coupling, EstimatorConfig};
use langevin::fisher::{empirical_score_variance, information_gap_estimate};
use langevin::metrics::{diffusivity_mae, drift_mae_with, follows_trend, grid_points, is_flat, mean_sd, MetricsConfig, Trend};
use langevin::rng::{derive_seed, tag};
use langevin::sim::{sample_initial, shuffle_to_snapshots, simulate, InitialDistribution};
use langevin::LangevinModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::replicate_seed;
use crate::error::{CliError, Result};
use crate::output::{resolve, OutputDir};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Uniform,
    Rademacher,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    /// Position on the sweep axis (the half-length for the built-in families).
    pub level: f64,
    pub init: InitialDistribution,
}

/// Points of a `Unif([−r, r]^d)` or `Rademacher(±r)` sweep.
pub fn family_points(family: Family, levels: &[f64]) -> Vec<SweepPoint> {
    levels
        .iter()
        .map(|&r| SweepPoint {
            label: format!("{}_{r}", serde_json::to_value(family).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
            level: r,
            init: match family {
                Family::Uniform => InitialDistribution::UniformBox { half_length: r },
                Family::Rademacher => InitialDistribution::Rademacher { level: r },
            },
        })
        .collect()
}

fn default_samples() -> usize {
    1000
}
fn default_replicates() -> usize {
    5
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherConfig {
    pub model: LangevinModel,
    /// Either a family with levels or an explicit list of points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<SweepPoint>,
    pub dt: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Also run both estimators on every replicate.
    #[serde(default = "default_true")]
    pub estimate: bool,
    /// Pairings drawn for the information-gap diagnostic; 0 skips it.
    #[serde(default)]
    pub n_resample: usize,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl FisherConfig {
    pub fn sweep(&self) -> Result<Vec<SweepPoint>> {
        let pts = match (self.family, self.points.is_empty()) {
            (Some(f), true) if !self.levels.is_empty() => family_points(f, &self.levels),
            (None, false) if self.levels.is_empty() => self.points.clone(),
            _ => {
                return Err(CliError::Config(
                    "give either `family` with non-empty `levels`, or a non-empty `points` list".into(),
                ))
            }
        };
        for p in &pts {
            p.init.validate(self.model.dim())?;
        }
        Ok(pts)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CliError::Config("dt must be positive".into()));
        }
        if self.n_samples < 2 || self.replicates == 0 {
            return Err(CliError::Config("need n_samples ≥ 2 and replicates ≥ 1".into()));
        }
        if self.model.potential.as_polynomial().is_none() {
            return Err(CliError::Config("Fisher sweeps need a polynomial potential".into()));
        }
        self.estimator.validate()?;
        self.sweep().map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherRow {
    pub label: String,
    pub level: f64,
    pub replicate: usize,
    /// Multi-index such as `2-0`, or `sigma2`.
    pub parameter: String,
    pub theoretical: f64,
    pub empirical: f64,
    pub stderr: f64,
    /// Information-gap diagnostic, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub label: String,
    pub level: f64,
    pub replicate: usize,
    /// `trajectories` or `marginals`.
    pub setting: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub label: String,
    pub level: f64,
    pub setting: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trends {
    /// Drift MAE from trajectories is nonincreasing along the sweep (one
    /// inversion within error bars allowed).
    pub drift_mae_trajectories_nonincreasing: Option<bool>,
    /// Diffusivity MAE from marginals is nondecreasing (same allowance).
    pub diffusion_mae_marginals_nondecreasing: Option<bool>,
    /// Diffusivity MAE from marginals stays within a factor 2 of its minimum.
    pub diffusion_mae_marginals_flat: Option<bool>,
    /// The theoretical diffusion information is identical at every point.
    pub diffusion_theoretical_constant: bool,
}

pub struct SweepOutput {
    pub fisher: Vec<FisherRow>,
    pub errors: Vec<ErrorRow>,
    pub summary: Vec<SweepSummary>,
    pub trends: Trends,
}

fn alpha_label(alpha: &langevin::MultiIndex) -> String {
    alpha.exponents().iter().map(|e| e.to_string()).collect::<Vec<_>>().join("-")
}

fn run_point(cfg: &FisherConfig, point: &SweepPoint, p_idx: usize, rep: usize) -> Result<(Vec<FisherRow>, Vec<ErrorRow>)> {
    let seed = replicate_seed(derive_seed(cfg.seed, p_idx as u64), rep);
    let init = sample_initial(&point.init, cfg.model.dim(), cfg.n_samples, seed)?;
    let trajs = simulate(&cfg.model, init.view(), &[0.0, cfg.dt], seed)?;
    let report = empirical_score_variance(&cfg.model, &trajs)?;
    let gap = if cfg.n_resample > 0 {
        let c = sinkhorn_coupling(
            trajs.samples_at(0),
            trajs.samples_at(1),
            &cfg.model,
            cfg.dt,
            &cfg.estimator.sinkhorn,
        )?;
        Some(information_gap_estimate(&cfg.model, &trajs, &c, cfg.n_resample, derive_seed(seed, tag::RESAMPLE))?)
    } else {
        None
    };
    let mut fisher: Vec<FisherRow> = report
        .per_coefficient
        .iter()
        .enumerate()
        .map(|(k, c)| FisherRow {
            label: point.label.clone(),
            level: point.level,
            replicate: rep,
            parameter: alpha_label(&c.alpha),
            theoretical: c.entry.theoretical,
            empirical: c.entry.empirical,
            stderr: c.entry.stderr,
            gap: gap.as_ref().map(|g| g.per_coefficient[k].1.gap),
        })
        .collect();
    fisher.push(FisherRow {
        label: point.label.clone(),
        level: point.level,
        replicate: rep,
        parameter: "sigma2".into(),
        theoretical: report.diffusion.theoretical,
        empirical: report.diffusion.empirical,
        stderr: report.diffusion.stderr,
        gap: gap.as_ref().map(|g| g.diffusion.gap),
    });

    let mut errors = Vec::new();
    if cfg.estimate {
        let grid = grid_points(cfg.metrics.grid_half_length, cfg.metrics.grid_per_axis, cfg.model.dim())?;
        let traj_est = mle_from_trajectories_with_floor(&trajs, cfg.estimator.degree, cfg.estimator.sigma2_floor)?;
        let marg_est = appex_estimate(&shuffle_to_snapshots(&trajs, seed), &cfg.estimator)?;
        for (setting, est) in [("trajectories", traj_est), ("marginals", marg_est)] {
            let m = est.model()?;
            let row = |metric: &str, value: f64| ErrorRow {
                label: point.label.clone(),
                level: point.level,
                replicate: rep,
                setting: setting.into(),
                metric: metric.into(),
                value,
            };
            errors.push(row(
                "drift_mae_grid",
                drift_mae_with(&cfg.model.potential, &m.potential, grid.view(), cfg.metrics.componentwise)?,
            ));
            errors.push(row("diffusivity_mae", diffusivity_mae(cfg.model.sigma2, est.sigma2_hat)));
        }
    }
    Ok((fisher, errors))
}

fn series(summary: &[SweepSummary], setting: &str, metric: &str) -> Option<(Vec<f64>, Vec<f64>)> {
    let sel: Vec<&SweepSummary> = summary.iter().filter(|s| s.setting == setting && s.metric == metric).collect();
    if sel.len() < 2 {
        return None;
    }
    Some((sel.iter().map(|s| s.mean).collect(), sel.iter().map(|s| s.sd).collect()))
}

/// Runs the sweep; replicates and points run concurrently, rows come back in
/// (point, replicate) order.
pub fn run_sweep(cfg: &FisherConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let points = cfg.sweep()?;
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..cfg.replicates).map(move |r| (p, r))).collect();
    let parts: Vec<(Vec<FisherRow>, Vec<ErrorRow>)> = jobs
        .par_iter()
        .map(|&(p, r)| run_point(cfg, &points[p], p, r))
        .collect::<Result<_>>()?;
    let mut fisher = Vec::new();
    let mut errors = Vec::new();
    for (f, e) in parts {
        fisher.extend(f);
        errors.extend(e);
    }

    let mut summary = Vec::new();
    for p in &points {
        for setting in ["trajectories", "marginals"] {
            for metric in ["drift_mae_grid", "diffusivity_mae"] {
                let v: Vec<f64> = errors
                    .iter()
                    .filter(|e| e.label == p.label && e.setting == setting && e.metric == metric)
                    .map(|e| e.value)
                    .collect();
                if v.is_empty() {
                    continue;
                }
                let (mean, sd) = mean_sd(&v);
                summary.push(SweepSummary {
                    label: p.label.clone(),
                    level: p.level,
                    setting: setting.into(),
                    metric: metric.into(),
                    mean,
                    sd,
                });
            }
        }
    }
    let diffusion_theory: Vec<f64> = fisher.iter().filter(|f| f.parameter == "sigma2").map(|f| f.theoretical).collect();
    let trends = Trends {
        drift_mae_trajectories_nonincreasing: series(&summary, "trajectories", "drift_mae_grid")
            .map(|(m, s)| follows_trend(&m, &s, Trend::Nonincreasing, 1)),
        diffusion_mae_marginals_nondecreasing: series(&summary, "marginals", "diffusivity_mae")
            .map(|(m, s)| follows_trend(&m, &s, Trend::Nondecreasing, 1)),
        diffusion_mae_marginals_flat: series(&summary, "marginals", "diffusivity_mae").map(|(m, _)| is_flat(&m, 2.0)),
        diffusion_theoretical_constant: diffusion_theory.windows(2).all(|w| w[0] == w[1]),
    };
    Ok(SweepOutput {
        fisher,
        errors,
        summary,
        trends,
    })
}

fn csv<T: Serialize>(header: &str, rows: &[T], fields: impl Fn(&T) -> Vec<String>) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&fields(r).join(","));
        s.push('\n');
    }
    s
}

/// Writes `fisher.csv`, `errors.csv`, `summary.csv`, `trends.json`.
pub fn fisher(cfg: &FisherConfig, out: Option<&Path>) -> Result<(PathBuf, Trends)> {
    let res = run_sweep(cfg)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fisher"));
    let mut dir = OutputDir::create(resolve(&dir))?;
    dir.seed("base", cfg.seed);
    let f = |v: f64| format!("{v:?}");
    dir.write(
        "fisher.csv",
        csv(
            "label,level,replicate,parameter,theoretical,empirical,stderr,gap",
            &res.fisher,
            |r| {
                vec![
                    r.label.clone(),
                    f(r.level),
                    r.replicate.to_string(),
                    r.parameter.clone(),
                    f(r.theoretical),
                    f(r.empirical),
                    f(r.stderr),
                    r.gap.map(f).unwrap_or_default(),
                ]
            },
        )
        .as_bytes(),
    )?;
    dir.write(
        "errors.csv",
        csv("label,level,replicate,setting,metric,value", &res.errors, |r| {
            vec![
                r.label.clone(),
                f(r.level),
                r.replicate.to_string(),
                r.setting.clone(),
                r.metric.clone(),
                f(r.value),
            ]
        })
        .as_bytes(),
    )?;
    dir.write(
        "summary.csv",
        csv("label,level,setting,metric,mean,sd", &res.summary, |r| {
            vec![
                r.label.clone(),
                f(r.level),
                r.setting.clone(),
                r.metric.clone(),
                f(r.mean),
                f(r.sd),
            ]
        })
        .as_bytes(),
    )?;
    dir.write_json("trends.json", &res.trends)?;
    let path = dir.path().to_path_buf();
    dir.finish("fisher", cfg)?;
    Ok((path, res.trends))
}
