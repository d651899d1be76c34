//! Drift and diffusivity error metrics on grid and Gibbs evaluation points.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::LangevinModel;
use crate::potentials::Potential;
use crate::stationary::{metropolis_sample, tune_proposal_scale, DEFAULT_MH_STEPS};

/// Vectors shorter than this are skipped by [`cosine_similarity`].
pub const COSINE_SKIP_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Average per-component absolute errors instead of Euclidean norms.
    pub componentwise: bool,
    pub grid_half_length: f64,
    pub grid_per_axis: usize,
    pub gibbs_points: usize,
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            componentwise: false,
            grid_half_length: 5.0,
            grid_per_axis: 50,
            gibbs_points: 1000,
            seed: 0,
        }
    }
}

/// Tensor grid on `[−half, half]^d` with `n_per_axis` points per axis; the
/// last coordinate varies fastest.
pub fn grid_points(half_length: f64, n_per_axis: usize, d: usize) -> Result<Array2<f64>> {
    if n_per_axis < 2 {
        return Err(Error::invalid("grid needs at least two points per axis"));
    }
    if !(half_length > 0.0) || d == 0 {
        return Err(Error::invalid("grid needs a positive half length and dimension"));
    }
    let step = 2.0 * half_length / (n_per_axis - 1) as f64;
    let total = n_per_axis.pow(d as u32);
    Ok(Array2::from_shape_fn((total, d), |(flat, axis)| {
        let idx = (flat / n_per_axis.pow((d - 1 - axis) as u32)) % n_per_axis;
        -half_length + idx as f64 * step
    }))
}

fn gradients(p: &Potential, points: ArrayView2<'_, f64>) -> Result<Vec<Vec<f64>>> {
    check_dim(p.dim(), points.ncols())?;
    if points.nrows() == 0 {
        return Err(Error::invalid("no evaluation points"));
    }
    Ok(points
        .rows()
        .into_iter()
        .map(|x| {
            let mut g = vec![0.0; x.len()];
            p.gradient_into(&x.to_vec(), &mut g);
            g
        })
        .collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Mean `‖∇Ψ_est − ∇Ψ_true‖` over the points divided by mean `‖∇Ψ_true‖`.
pub fn drift_mae(truth: &Potential, est: &Potential, points: ArrayView2<'_, f64>) -> Result<f64> {
    drift_mae_with(truth, est, points, false)
}

/// [`drift_mae`] with the option of per-component absolute errors
/// (normalized by the mean per-component magnitude of the true field).
pub fn drift_mae_with(truth: &Potential, est: &Potential, points: ArrayView2<'_, f64>, componentwise: bool) -> Result<f64> {
    check_dim(truth.dim(), est.dim())?;
    let gt = gradients(truth, points)?;
    let ge = gradients(est, points)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, e) in gt.iter().zip(&ge) {
        if componentwise {
            num += t.iter().zip(e).map(|(a, b)| (a - b).abs()).sum::<f64>();
            den += t.iter().map(|a| a.abs()).sum::<f64>();
        } else {
            let diff: Vec<f64> = t.iter().zip(e).map(|(a, b)| b - a).collect();
            num += norm(&diff);
            den += norm(t);
        }
    }
    if !(den > 0.0) {
        return Err(Error::invalid("true drift vanishes at every evaluation point"));
    }
    Ok(num / den)
}

pub fn diffusivity_mae(true_sigma2: f64, est_sigma2: f64) -> f64 {
    (est_sigma2 - true_sigma2).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineReport {
    pub mean: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Per-point cosine between the two drift fields, averaged over points where
/// both vectors have norm at least [`COSINE_SKIP_NORM`].
pub fn cosine_similarity(truth: &Potential, est: &Potential, points: ArrayView2<'_, f64>) -> Result<CosineReport> {
    check_dim(truth.dim(), est.dim())?;
    let gt = gradients(truth, points)?;
    let ge = gradients(est, points)?;
    let (mut sum, mut evaluated, mut skipped) = (0.0, 0usize, 0usize);
    for (t, e) in gt.iter().zip(&ge) {
        let (nt, ne) = (norm(t), norm(e));
        if nt < COSINE_SKIP_NORM || ne < COSINE_SKIP_NORM {
            skipped += 1;
            continue;
        }
        let dot: f64 = t.iter().zip(e).map(|(a, b)| a * b).sum();
        sum += dot / (nt * ne);
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::invalid("every evaluation point has a vanishing drift vector"));
    }
    Ok(CosineReport {
        mean: sum / evaluated as f64,
        evaluated,
        skipped,
    })
}

/// `n` draws from the Gibbs law of `model` by tuned random-walk Metropolis.
pub fn gibbs_eval_points(model: &LangevinModel, n: usize, seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::invalid("need at least one evaluation point"));
    }
    let scale = tune_proposal_scale(model, seed)?;
    Ok(metropolis_sample(model, n, DEFAULT_MH_STEPS, scale, seed)?.samples)
}

/// One tidy output row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model_id: String,
    pub setting: String,
    pub metric: String,
    pub value: f64,
    pub replicate: usize,
}

/// Tidy CSV with header `model_id,setting,metric,value,replicate`.
pub fn rows_to_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("model_id,setting,metric,value,replicate\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:?},{}\n", r.model_id, r.setting, r.metric, r.value, r.replicate));
    }
    out
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Direction of a trend check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Nonincreasing,
    Nondecreasing,
}

/// Whether the sequence of means follows `trend` with at most
/// `allowed_inversions` violations, each no larger than the sum of the two
/// neighbouring error bars.
pub fn follows_trend(means: &[f64], errors: &[f64], trend: Trend, allowed_inversions: usize) -> bool {
    let mut inversions = 0;
    for i in 1..means.len() {
        let step = match trend {
            Trend::Nonincreasing => means[i] - means[i - 1],
            Trend::Nondecreasing => means[i - 1] - means[i],
        };
        if step > 0.0 {
            inversions += 1;
            if step > errors[i] + errors[i - 1] {
                return false;
            }
        }
    }
    inversions <= allowed_inversions
}

/// Whether `max(values) ≤ ratio · min(values)` for positive values.
pub fn is_flat(values: &[f64], ratio: f64) -> bool {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    min > 0.0 && max <= ratio * min
}
