//! `reproduce <name>`: fixed desk-scale experiment matrices.

use std::path::{Path, PathBuf};

use langevin::estimate::EstimatorConfig;
use langevin::metrics::{rows_to_csv, MetricRow, MetricsConfig};
use langevin::rng::{derive_seed, tag};
use langevin::sim::{sample_initial, simulate, GibbsSampler, InitialDistribution};
use langevin::stationary::{rescaled_model, two_sample_test, DEFAULT_PERMUTATIONS};
use langevin::{LangevinModel, NamedKind, Potential};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{run_cell, summarize, summary_csv};
use crate::config::{replicate_seed, ExperimentConfig, Schedule, Setting};
use crate::error::{CliError, Result};
use crate::output::{resolve, OutputDir};
use crate::sweep::{self, Family, FisherConfig, SweepPoint};

/// Names accepted by `reproduce`.
pub const EXPERIMENTS: [&str; 5] = ["table1", "fig3", "fig6", "fig8", "prop1"];

/// Overrides applied to every cell of an experiment.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub replicates: Option<usize>,
    pub samples: Option<usize>,
}

fn named(kind: NamedKind, sigma2: f64) -> LangevinModel {
    LangevinModel {
        potential: Potential::named(kind),
        sigma2,
    }
}

/// The transient and stationary cells for quadratic and Styblinski–Tang at
/// `σ² ∈ {0.2, 0.4}`: six snapshots `Δt = 0.01` apart, 1000 particles,
/// five replicates.
pub fn table1_cells(ov: Overrides) -> Vec<ExperimentConfig> {
    let mut cells = Vec::new();
    for kind in [NamedKind::Quadratic, NamedKind::StyblinskiTang] {
        for sigma2 in [0.2, 0.4] {
            for setting in [Setting::Transient, Setting::Stationary] {
                let model = named(kind, sigma2);
                let init = match setting {
                    Setting::Transient => InitialDistribution::UniformBox { half_length: 4.0 },
                    Setting::Stationary => InitialDistribution::Gibbs {
                        model: Box::new(model.clone()),
                        sampler: GibbsSampler::default(),
                    },
                };
                cells.push(ExperimentConfig {
                    name: format!("{}_s{sigma2}_{}", kind.name(), setting.as_str()),
                    model,
                    init,
                    schedule: Schedule::uniform(0.01, 5),
                    setting,
                    replicates: ov.replicates.unwrap_or(5),
                    seed: 0,
                    n_samples: ov.samples.unwrap_or(1000),
                    estimator: EstimatorConfig::default(),
                    metrics: MetricsConfig::default(),
                    output_dir: None,
                });
            }
        }
    }
    cells
}

fn table1(dir: &Path, ov: Overrides) -> Result<()> {
    let cells = table1_cells(ov);
    let mut rows: Vec<MetricRow> = Vec::new();
    for cell in &cells {
        log::info!("table1: {}", cell.name);
        rows.extend(run_cell(cell)?);
    }
    let summary = summarize(&rows);
    let mut out = OutputDir::create(dir)?;
    out.seed("base", 0);
    for cell in &cells {
        out.write_json(&format!("configs/{}.json", cell.name), cell)?;
    }
    out.write("metrics.csv", rows_to_csv(&rows).as_bytes())?;
    out.write("summary.csv", summary_csv(&summary).as_bytes())?;
    out.finish("reproduce table1", &cells)?;
    Ok(())
}

fn sweep_config(kind: NamedKind, sigma2: f64, ov: Overrides) -> FisherConfig {
    FisherConfig {
        model: named(kind, sigma2),
        family: None,
        levels: Vec::new(),
        points: Vec::new(),
        dt: 1e-3,
        n_samples: ov.samples.unwrap_or(1000),
        replicates: ov.replicates.unwrap_or(5),
        seed: 0,
        estimate: true,
        n_resample: 0,
        estimator: EstimatorConfig::default(),
        metrics: MetricsConfig::default(),
        output_dir: None,
    }
}

fn family_sweep(dir: &Path, family: Family, ov: Overrides) -> Result<()> {
    let kinds: &[NamedKind] = match family {
        Family::Uniform => &[NamedKind::Quadratic, NamedKind::StyblinskiTang],
        Family::Rademacher => &[NamedKind::Quadratic],
    };
    for &kind in kinds {
        let cfg = FisherConfig {
            family: Some(family),
            levels: (1..=7).map(f64::from).collect(),
            ..sweep_config(kind, 0.2, ov)
        };
        log::info!("{family:?} sweep: {}", kind.name());
        sweep::fisher(&cfg, Some(&dir.join(kind.name())))?;
    }
    Ok(())
}

/// Fisher information at the true model for a Dirac and two uniform initial
/// laws, `N = 10⁵`, `Δt = 10⁻³`, without estimation.
fn fig6(dir: &Path, ov: Overrides) -> Result<()> {
    for sigma2 in [0.2, 1.0] {
        let cfg = FisherConfig {
            points: vec![
                SweepPoint {
                    label: "dirac".into(),
                    level: 0.0,
                    init: InitialDistribution::Dirac { point: vec![1.0, 1.0] },
                },
                SweepPoint {
                    label: "uniform_1".into(),
                    level: 1.0,
                    init: InitialDistribution::UniformBox { half_length: 1.0 },
                },
                SweepPoint {
                    label: "uniform_4".into(),
                    level: 4.0,
                    init: InitialDistribution::UniformBox { half_length: 4.0 },
                },
            ],
            n_samples: ov.samples.unwrap_or(100_000),
            replicates: ov.replicates.unwrap_or(1),
            estimate: false,
            ..sweep_config(NamedKind::Quadratic, sigma2, ov)
        };
        sweep::fisher(&cfg, Some(&dir.join(format!("sigma2_{sigma2}"))))?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct RescalingRow {
    setting: &'static str,
    replicate: usize,
    statistic: f64,
    p_value: f64,
}

#[derive(Clone, Debug, Serialize)]
struct RescalingSummary {
    setting: &'static str,
    replicates: usize,
    rejection_rate: f64,
}

#[derive(Serialize)]
struct RescalingConfig {
    model: LangevinModel,
    alpha: f64,
    dt: f64,
    n_steps: usize,
    substeps: usize,
    n_samples: usize,
    replicates: usize,
    permutations: usize,
    level: f64,
}

/// Final snapshots of `(Ψ, σ²)` and of the rescaled `(αΨ, ασ²)` started
/// from the same law, compared with an energy-distance test.
fn rescaling_pair(cfg: &RescalingConfig, init: &InitialDistribution, seed: u64) -> Result<(f64, f64)> {
    let fast = rescaled_model(&cfg.model, cfg.alpha)?;
    let schedule = Schedule {
        substeps: cfg.substeps,
        ..Schedule::uniform(cfg.dt, cfg.n_steps)
    };
    let (grid, _) = schedule.simulation_grid()?;
    let d = cfg.model.dim();
    let mut last = Vec::new();
    for (k, m) in [&cfg.model, &fast].into_iter().enumerate() {
        let s = derive_seed(seed, k as u64);
        let x0 = sample_initial(init, d, cfg.n_samples, s)?;
        last.push(simulate(m, x0.view(), &grid, s)?.final_samples());
    }
    let t = two_sample_test(last[0].view(), last[1].view(), cfg.permutations, derive_seed(seed, tag::PERMUTATION))?;
    Ok((t.statistic, t.p_value))
}

fn prop1(dir: &Path, ov: Overrides) -> Result<()> {
    let model = named(NamedKind::Quadratic, 0.2);
    let cfg = RescalingConfig {
        model: model.clone(),
        alpha: 10.0,
        dt: 0.01,
        n_steps: 5,
        substeps: 10,
        n_samples: ov.samples.unwrap_or(1000),
        replicates: ov.replicates.unwrap_or(100),
        permutations: DEFAULT_PERMUTATIONS,
        level: 0.05,
    };
    let settings: [(&'static str, InitialDistribution); 2] = [
        (
            "stationary",
            InitialDistribution::Gibbs {
                model: Box::new(model),
                sampler: GibbsSampler::default(),
            },
        ),
        ("transient", InitialDistribution::UniformBox { half_length: 4.0 }),
    ];
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (setting, init) in &settings {
        let tests: Vec<(f64, f64)> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| rescaling_pair(&cfg, init, replicate_seed(0, r)))
            .collect::<Result<_>>()?;
        let rejected = tests.iter().filter(|(_, p)| *p <= cfg.level).count();
        summary.push(RescalingSummary {
            setting,
            replicates: cfg.replicates,
            rejection_rate: rejected as f64 / cfg.replicates as f64,
        });
        rows.extend(tests.into_iter().enumerate().map(|(replicate, (statistic, p_value))| RescalingRow {
            setting,
            replicate,
            statistic,
            p_value,
        }));
    }
    let mut csv = String::from("setting,replicate,statistic,p_value\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{:?},{:?}\n", r.setting, r.replicate, r.statistic, r.p_value));
    }
    let mut out = OutputDir::create(dir)?;
    out.seed("base", 0);
    out.write("tests.csv", csv.as_bytes())?;
    out.write_json("summary.json", &summary)?;
    out.finish("reproduce prop1", &cfg)?;
    Ok(())
}

/// Runs the named experiment below `<output root>/<name>` and returns that directory.
pub fn reproduce(name: &str, ov: Overrides) -> Result<PathBuf> {
    if ov.replicates == Some(0) || ov.samples.is_some_and(|n| n < 10) {
        return Err(CliError::Config("need at least one replicate and ten samples".into()));
    }
    let dir = resolve(Path::new(name));
    match name {
        "table1" => table1(&dir, ov)?,
        "fig3" => family_sweep(&dir, Family::Uniform, ov)?,
        "fig8" => family_sweep(&dir, Family::Rademacher, ov)?,
        "fig6" => fig6(&dir, ov)?,
        "prop1" => prop1(&dir, ov)?,
        _ => {
            return Err(CliError::Config(format!(
                "unknown experiment {name:?}; expected one of {}",
                EXPERIMENTS.join(", ")
            )))
        }
    }
    Ok(dir)
}
