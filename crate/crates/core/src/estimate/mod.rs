//! Joint drift–diffusivity estimation under the linearized Gaussian
//! transition density, from coupled trajectories or from marginal
//! snapshots (alternating entropic trajectory inference and weighted MLE).

mod lstsq;
mod sinkhorn;

pub use sinkhorn::{sinkhorn_coupling, Coupling, SinkhornConfig};

use std::f64::consts::PI;
use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::LangevinModel;
use crate::potentials::{GradientBasis, PolynomialPotential, Potential, Term};
use crate::rng::{self, tag};
use crate::sim::{SnapshotSeries, TrajectorySet};
use crate::stationary::{stationarity_test, two_sample_test, StationarityRecord, DEFAULT_PERMUTATIONS};
use lstsq::{DriftEvaluator, NormalEquations};
use sinkhorn::{sinkhorn_warm, Duals};

pub const DEFAULT_DEGREE: u32 = 4;
pub const DEFAULT_SIGMA2_FLOOR: f64 = 1e-8;
/// Level of the consecutive-snapshot tests behind the stationarity warning.
pub const STATIONARITY_LEVEL: f64 = 0.05;
/// Allowed per-iteration decrease of the alternating objective.
const MONOTONE_TOL: f64 = 1e-6;
/// Sinkhorn tolerance reduction after a rejected outer iteration.
const REFINE_FACTOR: f64 = 0.1;
const MIN_REFINED_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSetting {
    Trajectories,
    Marginals,
}

/// How a coupling is turned into transitions for the MLE step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryInference {
    /// Every pair `(i, j)` weighted by `π_ij`.
    #[default]
    Soft,
    /// One destination per source drawn from the conditional plan.
    Resample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub degree: u32,
    /// Stop once the largest parameter change falls below this.
    pub tol: f64,
    pub max_outer: usize,
    pub sinkhorn: SinkhornConfig,
    pub sigma2_floor: f64,
    pub seed: u64,
    pub inference: TrajectoryInference,
    pub permutations: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            degree: DEFAULT_DEGREE,
            tol: 1e-4,
            max_outer: 30,
            sinkhorn: SinkhornConfig::default(),
            sigma2_floor: DEFAULT_SIGMA2_FLOOR,
            seed: 0,
            inference: TrajectoryInference::Soft,
            permutations: DEFAULT_PERMUTATIONS,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::invalid("degree must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol must be positive"));
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("max_outer must be at least 1"));
        }
        if !(self.sigma2_floor > 0.0) {
            return Err(Error::invalid("sigma2_floor must be positive"));
        }
        self.sinkhorn.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub dim: usize,
    pub degree: u32,
    /// Every basis coefficient in graded-lex order, zeros included.
    pub coefficients: Vec<Term>,
    pub sigma2_hat: f64,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub data_setting: DataSetting,
    pub converged: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stationarity: Vec<StationarityRecord>,
    /// Set when no consecutive pair of snapshots differs detectably.
    #[serde(default)]
    pub stationary_warning: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<EstimatorConfig>,
}

impl EstimationResult {
    pub fn theta(&self) -> Vec<f64> {
        self.coefficients.iter().map(|t| t.value).collect()
    }

    pub fn potential(&self) -> Result<PolynomialPotential> {
        PolynomialPotential::from_basis_coefficients(self.dim, self.degree, &self.theta())
    }

    pub fn model(&self) -> Result<LangevinModel> {
        LangevinModel::new(Potential::Polynomial(self.potential()?), self.sigma2_hat)
    }

    /// Runs the consecutive-pair stationarity test on `series`, plus a test of
    /// the first against the last snapshot when there are more than two, and
    /// records the outcome.
    pub fn attach_stationarity(&mut self, series: &SnapshotSeries, permutations: usize, seed: u64) -> Result<()> {
        self.stationarity = stationarity_test(series, permutations, seed)?;
        if series.len() > 2 {
            let (first, last) = (&series.snapshots[0], &series.snapshots[series.len() - 1]);
            let t = two_sample_test(
                first.samples.view(),
                last.samples.view(),
                permutations,
                seed.wrapping_add(series.len() as u64),
            )?;
            self.stationarity.push(StationarityRecord {
                t_i: first.time,
                t_j: last.time,
                statistic: t.statistic,
                p_value: t.p_value,
            });
        }
        self.stationary_warning = looks_stationary(&self.stationarity);
        if self.stationary_warning {
            self.warnings.push(
                "no tested snapshot pair differs significantly; the data look stationary and drift/diffusivity are not identifiable from them"
                    .into(),
            );
        }
        Ok(())
    }
}

/// True when no pair rejects at `STATIONARITY_LEVEL` after a Bonferroni
/// correction over the pairs.
pub fn looks_stationary(records: &[StationarityRecord]) -> bool {
    let level = STATIONARITY_LEVEL / records.len().max(1) as f64;
    records.iter().all(|r| r.p_value > level)
}

enum Plan<'a> {
    Identity,
    Weights(&'a Array2<f64>),
}

struct Pair<'a> {
    x0: ArrayView2<'a, f64>,
    x1: ArrayView2<'a, f64>,
    dt: f64,
    plan: Plan<'a>,
}

struct Fit {
    theta: Vec<f64>,
    sigma2: f64,
    /// `Σ_pairs E_π[log p_θ(y | x)]` at the fitted parameters.
    loglik: f64,
    null_dim: usize,
    floored: Option<f64>,
}

fn row(x: &ArrayView2<'_, f64>, i: usize) -> Vec<f64> {
    x.row(i).to_vec()
}

/// Weighted linearized MLE over all pairs, pooled with equal total weight per
/// coupling (each plan sums to one; identity plans weigh each path by one).
fn fit_pairs(pairs: &[Pair<'_>], basis: &GradientBasis, floor: f64) -> Result<Fit> {
    let d = basis.dim();
    let mut ne = NormalEquations::new(basis);
    let mut ybar = vec![0.0; d];
    for pair in pairs {
        for i in 0..pair.x0.nrows() {
            let x = row(&pair.x0, i);
            match pair.plan {
                Plan::Identity => ne.add(&x, 1.0, &row(&pair.x1, i), pair.dt),
                Plan::Weights(w) => {
                    ybar.iter_mut().for_each(|v| *v = 0.0);
                    let mut r = 0.0;
                    for (j, &wij) in w.row(i).iter().enumerate() {
                        if wij > 0.0 {
                            r += wij;
                            for k in 0..d {
                                ybar[k] += wij * pair.x1[[j, k]];
                            }
                        }
                    }
                    ne.add(&x, r, &ybar, pair.dt);
                }
            }
        }
    }
    let sol = ne.solve()?;
    let mut eval = DriftEvaluator::new(basis, &sol.theta);
    let mut mean = vec![0.0; d];
    let mut sums = Vec::with_capacity(pairs.len());
    let (mut num, mut den) = (0.0, 0.0);
    for pair in pairs {
        let (mut wsum, mut rsum) = (0.0, 0.0);
        for i in 0..pair.x0.nrows() {
            eval.mean_into(&row(&pair.x0, i), pair.dt, &mut mean);
            let sq = |j: usize| -> f64 { (0..d).map(|k| (pair.x1[[j, k]] - mean[k]).powi(2)).sum() };
            match pair.plan {
                Plan::Identity => {
                    wsum += 1.0;
                    rsum += sq(i);
                }
                Plan::Weights(w) => {
                    for (j, &wij) in w.row(i).iter().enumerate() {
                        if wij > 0.0 {
                            wsum += wij;
                            rsum += wij * sq(j);
                        }
                    }
                }
            }
        }
        num += rsum / pair.dt;
        den += d as f64 * wsum;
        sums.push((wsum, rsum));
    }
    if !(den > 0.0) {
        return Err(Error::Numerical("no transition carries positive weight".into()));
    }
    let raw = num / den;
    if !raw.is_finite() {
        return Err(Error::Numerical("non-finite diffusivity estimate".into()));
    }
    let (sigma2, floored) = if raw < floor { (floor, Some(raw)) } else { (raw, None) };
    let loglik = pairs
        .iter()
        .zip(&sums)
        .map(|(p, (w, r))| -0.5 * d as f64 * w * (2.0 * PI * sigma2 * p.dt).ln() - r / (2.0 * sigma2 * p.dt))
        .sum();
    Ok(Fit {
        theta: sol.theta,
        sigma2,
        loglik,
        null_dim: sol.null_dim,
        floored,
    })
}

fn fit_warnings(fit: &Fit, floor: f64) -> Vec<String> {
    let mut w = Vec::new();
    if fit.null_dim > 0 {
        w.push(format!(
            "design matrix is rank deficient (null space of dimension {}); least-norm drift coefficients reported",
            fit.null_dim
        ));
    }
    if let Some(raw) = fit.floored {
        w.push(format!("diffusivity estimate {raw:e} below floor; clamped to {floor:e}"));
    }
    w
}

fn result_from(fit: &Fit, basis: &GradientBasis, setting: DataSetting) -> EstimationResult {
    EstimationResult {
        dim: basis.dim(),
        degree: basis.degree(),
        coefficients: basis
            .indices()
            .iter()
            .zip(&fit.theta)
            .map(|(a, v)| Term { alpha: a.clone(), value: *v })
            .collect(),
        sigma2_hat: fit.sigma2,
        iterations: 1,
        loglik_trace: vec![fit.loglik],
        data_setting: setting,
        converged: true,
        warnings: Vec::new(),
        stationarity: Vec::new(),
        stationary_warning: false,
        config: None,
    }
}

/// Linearized MLE from coupled paths: drift by weighted least squares on
/// `Σ ‖x_{t+Δt} − x_t + Δt ∇Ψ_θ(x_t)‖²/Δt`, then the closed-form `σ̂²`.
pub fn mle_from_trajectories(trajs: &TrajectorySet, degree: u32) -> Result<EstimationResult> {
    mle_from_trajectories_with_floor(trajs, degree, DEFAULT_SIGMA2_FLOOR)
}

pub fn mle_from_trajectories_with_floor(trajs: &TrajectorySet, degree: u32, floor: f64) -> Result<EstimationResult> {
    if trajs.n_times() < 2 {
        return Err(Error::invalid("need at least two observation times"));
    }
    let basis = GradientBasis::new(trajs.dim(), degree);
    let transitions = trajs.n_paths() * (trajs.n_times() - 1);
    if transitions < basis.len() {
        return Err(Error::invalid(format!(
            "{transitions} transitions cannot determine {} coefficients",
            basis.len()
        )));
    }
    let pairs: Vec<Pair<'_>> = (0..trajs.n_times() - 1)
        .map(|t| Pair {
            x0: trajs.samples_at(t),
            x1: trajs.samples_at(t + 1),
            dt: trajs.times[t + 1] - trajs.times[t],
            plan: Plan::Identity,
        })
        .collect();
    let fit = fit_pairs(&pairs, &basis, floor)?;
    let mut res = result_from(&fit, &basis, DataSetting::Trajectories);
    res.warnings = fit_warnings(&fit, floor);
    Ok(res)
}

/// Weighted MLE with a fixed coupling per consecutive snapshot pair.
pub fn weighted_mle(series: &SnapshotSeries, couplings: &[Coupling], degree: u32, floor: f64) -> Result<EstimationResult> {
    check_pairs(series, couplings)?;
    let basis = GradientBasis::new(series.dim(), degree);
    let pairs = series_pairs(series, couplings);
    let fit = fit_pairs(&pairs, &basis, floor)?;
    let mut res = result_from(&fit, &basis, DataSetting::Marginals);
    res.warnings = fit_warnings(&fit, floor);
    Ok(res)
}

fn check_pairs(series: &SnapshotSeries, couplings: &[Coupling]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::invalid("need at least two snapshots"));
    }
    check_dim(series.len() - 1, couplings.len())?;
    for (w, c) in series.snapshots.windows(2).zip(couplings) {
        if c.shape() != (w[0].samples.nrows(), w[1].samples.nrows()) {
            return Err(Error::invalid(format!(
                "coupling of shape {:?} does not match clouds of sizes {} and {}",
                c.shape(),
                w[0].samples.nrows(),
                w[1].samples.nrows()
            )));
        }
    }
    Ok(())
}

fn series_pairs<'a>(series: &'a SnapshotSeries, couplings: &'a [Coupling]) -> Vec<Pair<'a>> {
    series
        .snapshots
        .windows(2)
        .zip(couplings)
        .map(|(w, c)| Pair {
            x0: w[0].samples.view(),
            x1: w[1].samples.view(),
            dt: w[1].time - w[0].time,
            plan: Plan::Weights(&c.weights),
        })
        .collect()
}

/// Initial diffusivity: mean squared distance from each source to its
/// nearest point in the next snapshot, divided by `d·Δt`, averaged over pairs.
pub fn initial_sigma2(series: &SnapshotSeries) -> f64 {
    let d = series.dim() as f64;
    let per_pair: Vec<f64> = series
        .snapshots
        .windows(2)
        .map(|w| {
            let (x0, x1) = (&w[0].samples, &w[1].samples);
            let total: f64 = x0
                .rows()
                .into_iter()
                .map(|a| {
                    x1.rows()
                        .into_iter()
                        .map(|b| a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            total / x0.nrows() as f64 / (d * (w[1].time - w[0].time))
        })
        .collect();
    per_pair.iter().sum::<f64>() / per_pair.len() as f64
}

/// Replaces each row of a plan by a single destination drawn from it.
fn resample_plan(c: &Coupling, seed: u64, stream: u64) -> Array2<f64> {
    let mut rng = rng::stream(rng::derive_seed(seed, tag::RESAMPLE), stream);
    let mut out = Array2::zeros(c.weights.dim());
    for (i, r) in c.weights.rows().into_iter().enumerate() {
        let total = c.row_marginal[i];
        if total <= 0.0 {
            continue;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = r.len() - 1;
        for (j, w) in r.iter().enumerate() {
            if u < *w {
                pick = j;
                break;
            }
            u -= w;
        }
        out[[i, pick]] = total;
    }
    out
}

/// Alternates entropic couplings of consecutive snapshots under the current
/// guess with a coupling-weighted MLE, starting from zero drift and the
/// nearest-neighbour diffusivity.
///
/// With `ε = s σ² Δt` each coupling step maximizes
/// `E_π[log p_θ] + (s/2) H(π)` at fixed parameters and each MLE step
/// maximizes it at fixed couplings; `loglik_trace` records this objective at
/// each accepted iteration. An iteration that lowers it (an inexact coupling
/// step) is rejected together with its predecessor, which is recomputed at a
/// tighter Sinkhorn tolerance.
pub fn appex_estimate(series: &SnapshotSeries, config: &EstimatorConfig) -> Result<EstimationResult> {
    config.validate()?;
    if series.len() < 2 {
        return Err(Error::invalid("need at least two snapshots"));
    }
    let d = series.dim();
    let basis = GradientBasis::new(d, config.degree);
    let n_pairs = series.len() - 1;
    let mut warnings = Vec::new();

    if series.snapshots.iter().all(|s| s.samples.nrows() == 1) {
        // point-mass snapshots admit a single coupling: one MLE pass suffices
        let couplings: Vec<Coupling> = (0..n_pairs).map(|_| Coupling::new(Array2::ones((1, 1)))).collect::<Result<_>>()?;
        let mut res = weighted_mle(series, &couplings, config.degree, config.sigma2_floor)?;
        res.config = Some(config.clone());
        return Ok(res);
    }

    let mut theta = vec![0.0; basis.len()];
    let mut sigma2 = initial_sigma2(series).max(config.sigma2_floor);
    let mut duals: Vec<Option<Duals>> = vec![None; n_pairs];
    let mut sinkhorn = config.sinkhorn;
    // accepted iterates with the guess that produced each of them
    let mut accepted: Vec<(f64, Fit, Vec<f64>, f64)> = Vec::new();
    let mut rolled_back = None;
    let mut converged = false;
    let mut iterations = 0;
    let half_s = 0.5 * config.sinkhorn.epsilon_scale;

    for it in 1..=config.max_outer {
        iterations = it;
        let guess = LangevinModel::new(
            Potential::Polynomial(PolynomialPotential::from_basis_coefficients(d, config.degree, &theta)?),
            sigma2,
        )?;
        let solved: Vec<(Coupling, Duals)> = series
            .snapshots
            .par_windows(2)
            .zip(duals.par_iter())
            .map(|(w, warm)| {
                sinkhorn_warm(
                    w[0].samples.view(),
                    w[1].samples.view(),
                    &guess,
                    w[1].time - w[0].time,
                    &sinkhorn,
                    warm.as_ref(),
                )
            })
            .collect::<Result<_>>()?;
        let mut couplings = Vec::with_capacity(n_pairs);
        for (p, (c, du)) in solved.into_iter().enumerate() {
            if !c.converged {
                warnings.push(format!(
                    "coupling {p} did not reach marginal tolerance at outer iteration {it} (error {:e})",
                    c.marginal_error
                ));
            }
            duals[p] = Some(du);
            couplings.push(c);
        }
        let entropy: f64 = couplings.iter().map(Coupling::entropy).sum();
        let fit = match config.inference {
            TrajectoryInference::Soft => fit_pairs(&series_pairs(series, &couplings), &basis, config.sigma2_floor)?,
            TrajectoryInference::Resample => {
                let hard: Vec<Coupling> = couplings
                    .iter()
                    .enumerate()
                    .map(|(p, c)| {
                        let mut h = c.clone();
                        h.weights = resample_plan(c, config.seed, (it * n_pairs + p) as u64);
                        h
                    })
                    .collect();
                fit_pairs(&series_pairs(series, &hard), &basis, config.sigma2_floor)?
            }
        };
        let objective = match config.inference {
            TrajectoryInference::Soft => fit.loglik + half_s * entropy,
            TrajectoryInference::Resample => fit.loglik,
        };
        if config.inference == TrajectoryInference::Soft {
            if let Some((b, ..)) = accepted.last() {
                if objective < b - MONOTONE_TOL * b.abs().max(1.0) {
                    // objectives of inexact couplings are biased; redo the
                    // previous step at a tighter marginal tolerance
                    warnings.push(format!(
                        "outer iteration {it} decreased the objective; previous step redone at Sinkhorn tolerance {:e}",
                        (sinkhorn.tol * REFINE_FACTOR).max(MIN_REFINED_TOL)
                    ));
                    sinkhorn.tol = (sinkhorn.tol * REFINE_FACTOR).max(MIN_REFINED_TOL);
                    if let Some(prev) = accepted.pop() {
                        theta.clone_from(&prev.2);
                        sigma2 = prev.3;
                        rolled_back = Some(prev);
                    }
                    continue;
                }
            }
        }
        let change = theta
            .iter()
            .zip(&fit.theta)
            .map(|(a, b)| (a - b).abs())
            .fold((sigma2 - fit.sigma2).abs(), f64::max);
        let guess_theta = std::mem::replace(&mut theta, fit.theta.clone());
        let guess_sigma2 = std::mem::replace(&mut sigma2, fit.sigma2);
        accepted.push((objective, fit, guess_theta, guess_sigma2));
        if change < config.tol {
            converged = true;
            break;
        }
    }

    let trace: Vec<f64> = accepted.iter().map(|a| a.0).collect();
    let (_, fit, ..) = accepted
        .pop()
        .or(rolled_back)
        .ok_or_else(|| Error::Numerical("no iterate produced".into()))?;
    let mut res = result_from(&fit, &basis, DataSetting::Marginals);
    res.iterations = iterations;
    res.loglik_trace = trace;
    res.converged = converged;
    res.warnings = fit_warnings(&fit, config.sigma2_floor);
    res.warnings.extend(warnings);
    if !converged {
        res.warnings.push(format!(
            "alternating estimation did not converge in {} outer iterations; best iterate returned",
            config.max_outer
        ));
    }
    res.config = Some(config.clone());
    Ok(res)
}

/// Partition of `[0, T]` into regimes `[b_r, b_{r+1})`, the last one closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub boundaries: Vec<f64>,
}

impl RegimeSpec {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::invalid("a regime partition needs at least two boundaries"));
        }
        if boundaries.iter().any(|b| !b.is_finite()) || boundaries.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("regime boundaries must be finite and strictly increasing"));
        }
        Ok(RegimeSpec { boundaries })
    }

    /// A single regime spanning the series.
    pub fn single(series: &SnapshotSeries) -> Result<Self> {
        let t = series.times();
        Self::new(vec![t[0], *t.last().unwrap_or(&t[0])])
    }

    /// Snapshot index ranges of each regime. Times within `1e-9·T` below a
    /// boundary count as on it.
    pub fn assign(&self, series: &SnapshotSeries) -> Result<Vec<Range<usize>>> {
        let times = series.times();
        let (lo, hi) = (self.boundaries[0], *self.boundaries.last().unwrap_or(&0.0));
        let slack = 1e-9 * lo.abs().max(hi.abs()).max(1.0);
        let n_reg = self.boundaries.len() - 1;
        let mut which = Vec::with_capacity(times.len());
        for &t in &times {
            if t < lo - slack || t > hi + slack {
                return Err(Error::invalid(format!("snapshot time {t} lies outside [{lo}, {hi}]")));
            }
            let r = (0..n_reg)
                .rev()
                .find(|&r| t >= self.boundaries[r] - slack)
                .unwrap_or(0);
            which.push(r);
        }
        let mut out = Vec::with_capacity(n_reg);
        for r in 0..n_reg {
            let idx: Vec<usize> = (0..times.len()).filter(|&i| which[i] == r).collect();
            if idx.len() < 2 {
                return Err(Error::invalid(format!("regime {r} contains {} snapshot(s); at least 2 needed", idx.len())));
            }
            out.push(idx[0]..idx[idx.len() - 1] + 1);
        }
        Ok(out)
    }
}

/// Independent marginal estimation per regime, each carrying its own
/// stationarity diagnostic.
pub fn estimate_piecewise(series: &SnapshotSeries, regimes: &RegimeSpec, config: &EstimatorConfig) -> Result<Vec<EstimationResult>> {
    let ranges = regimes.assign(series)?;
    ranges
        .into_iter()
        .enumerate()
        .map(|(r, range)| {
            let sub = series.slice(range)?;
            let mut res = appex_estimate(&sub, config)?;
            res.attach_stationarity(&sub, config.permutations, rng::derive_seed(config.seed, r as u64))?;
            Ok(res)
        })
        .collect()
}
