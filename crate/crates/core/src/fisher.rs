//! Fisher information of the linearized transition density: closed-form
//! per-coefficient and diffusion values, Monte-Carlo score variances, and
//! the information lost when pairings are replaced by a coupling.
//!
//! For one transition `x → y` over `Δt` with residual `r = y − x + Δt∇Ψ(x)`
//! the scores at the true parameters are
//! `S_α = −(1/σ²) rᵀ ∇x^α(x)` and `S_σ² = −d/(2σ²) + ‖r‖²/(2σ⁴Δt)`.

use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::estimate::Coupling;
use crate::model::LangevinModel;
use crate::potentials::{GradientBasis, MultiIndex, PolynomialPotential};
use crate::rng::{self, tag};
use crate::sim::TrajectorySet;

/// Value with a Monte-Carlo comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherEntry {
    pub theoretical: f64,
    /// `n` times the sample variance of per-trajectory scores.
    pub empirical: f64,
    /// Jackknife standard error of `empirical`.
    pub stderr: f64,
    pub score_mean: f64,
    pub score_mean_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFisher {
    pub alpha: MultiIndex,
    #[serde(flatten)]
    pub entry: FisherEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub per_coefficient: Vec<CoefficientFisher>,
    pub diffusion: FisherEntry,
    pub n: usize,
    pub dt: f64,
    pub d: usize,
}

fn polynomial(model: &LangevinModel) -> Result<PolynomialPotential> {
    model
        .potential
        .as_polynomial()
        .ok_or_else(|| Error::invalid("Fisher information needs a polynomial potential"))
}

/// Per-coefficient drift information for `N` single-step transitions from
/// `init_samples`: `N Δt/σ² Σ_i α_i² mean(x^{2α − 2e_i})`, for every `α`
/// with `1 ≤ |α| ≤ k` in graded-lex order.
pub fn drift_fisher_theoretical(
    model: &LangevinModel,
    init_samples: ArrayView2<'_, f64>,
    dt: f64,
) -> Result<Vec<(MultiIndex, f64)>> {
    model.validate()?;
    let p = polynomial(model)?;
    check_dim(model.dim(), init_samples.ncols())?;
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let n = init_samples.nrows();
    if n == 0 {
        return Err(Error::invalid("need at least one initial sample"));
    }
    let d = model.dim();
    let basis = GradientBasis::new(d, p.degree());
    let (mut powers, mut b) = basis.scratch();
    let mut sums = vec![0.0; basis.len()];
    for x in init_samples.rows() {
        basis.eval_into(&x.to_vec(), &mut powers, &mut b);
        for (a, s) in sums.iter_mut().enumerate() {
            // ‖∇x^α‖² = Σ_i α_i² x^{2α−2e_i}
            *s += b[a * d..(a + 1) * d].iter().map(|v| v * v).sum::<f64>();
        }
    }
    let scale = n as f64 * dt / model.sigma2;
    Ok(basis
        .indices()
        .iter()
        .zip(sums)
        .map(|(a, s)| (a.clone(), scale * s / n as f64))
        .collect())
}

/// `n d / (2σ⁴)`; independent of the initial law.
pub fn diffusion_fisher_theoretical(d: usize, sigma2: f64, n: usize) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::invalid("sigma2 must be positive"));
    }
    Ok(n as f64 * d as f64 / (2.0 * sigma2 * sigma2))
}

/// Scores of one transition; `out` holds the drift scores followed by the
/// diffusion score.
struct Scorer<'a> {
    model: &'a LangevinModel,
    basis: GradientBasis,
    powers: Vec<f64>,
    b: Vec<f64>,
    grad: Vec<f64>,
    r: Vec<f64>,
}

impl<'a> Scorer<'a> {
    fn new(model: &'a LangevinModel, degree: u32) -> Self {
        let basis = GradientBasis::new(model.dim(), degree);
        let (powers, b) = basis.scratch();
        let d = model.dim();
        Scorer {
            model,
            basis,
            powers,
            b,
            grad: vec![0.0; d],
            r: vec![0.0; d],
        }
    }

    fn n_params(&self) -> usize {
        self.basis.len() + 1
    }

    fn score(&mut self, x: &[f64], y: &[f64], dt: f64, out: &mut [f64]) {
        let d = x.len();
        let s2 = self.model.sigma2;
        self.model.potential.gradient_into(x, &mut self.grad);
        for i in 0..d {
            self.r[i] = y[i] - x[i] + dt * self.grad[i];
        }
        self.basis.eval_into(x, &mut self.powers, &mut self.b);
        for a in 0..self.basis.len() {
            let dot: f64 = (0..d).map(|i| self.r[i] * self.b[a * d + i]).sum();
            out[a] = -dot / s2;
        }
        let rr: f64 = self.r.iter().map(|v| v * v).sum();
        out[self.basis.len()] = -(d as f64) / (2.0 * s2) + rr / (2.0 * s2 * s2 * dt);
    }
}

/// Sample variance with a jackknife standard error. For `n = 2` the
/// standard error falls back to the variance itself.
fn variance_with_stderr(s: &[f64]) -> (f64, f64, f64, f64) {
    let n = s.len();
    let nf = n as f64;
    let mean = s.iter().sum::<f64>() / nf;
    if n < 2 {
        return (mean, f64::NAN, 0.0, f64::NAN);
    }
    let ss: f64 = s.iter().map(|v| (v - mean).powi(2)).sum();
    let var = ss / (nf - 1.0);
    let mean_se = (var / nf).sqrt();
    if n == 2 {
        return (mean, mean_se, var, var);
    }
    // leave-one-out: SS_(k) = SS − n/(n−1)·(s_k − mean)²
    let loo: Vec<f64> = s
        .iter()
        .map(|v| (ss - nf / (nf - 1.0) * (v - mean).powi(2)) / (nf - 2.0))
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / nf;
    let jk = ((nf - 1.0) / nf * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>()).sqrt();
    (mean, mean_se, var, jk)
}

/// Monte-Carlo Fisher information from single-step trajectories generated by
/// `model`, compared with the closed forms.
pub fn empirical_score_variance(model: &LangevinModel, trajs: &TrajectorySet) -> Result<FisherReport> {
    model.validate()?;
    let p = polynomial(model)?;
    check_dim(model.dim(), trajs.dim())?;
    if trajs.n_times() != 2 {
        return Err(Error::invalid("score variances need exactly two observation times"));
    }
    let n = trajs.n_paths();
    let dt = trajs.times[1] - trajs.times[0];
    let (x0, x1) = (trajs.samples_at(0), trajs.samples_at(1));
    let n_params = GradientBasis::new(model.dim(), p.degree()).len() + 1;
    let scores: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map_init(
            || Scorer::new(model, p.degree()),
            |sc, j| {
                let mut out = vec![0.0; n_params];
                sc.score(&x0.row(j).to_vec(), &x1.row(j).to_vec(), dt, &mut out);
                out
            },
        )
        .collect();
    let theory = drift_fisher_theoretical(model, x0, dt)?;
    let nf = n as f64;
    let entry = |k: usize, theoretical: f64| {
        let col: Vec<f64> = scores.iter().map(|s| s[k]).collect();
        let (mean, mean_se, var, se) = variance_with_stderr(&col);
        FisherEntry {
            theoretical,
            empirical: nf * var,
            stderr: nf * se,
            score_mean: mean,
            score_mean_stderr: mean_se,
        }
    };
    let per_coefficient = theory
        .iter()
        .enumerate()
        .map(|(k, (alpha, th))| CoefficientFisher {
            alpha: alpha.clone(),
            entry: entry(k, *th),
        })
        .collect();
    let diffusion = entry(n_params - 1, diffusion_fisher_theoretical(model.dim(), model.sigma2, n)?);
    Ok(FisherReport {
        per_coefficient,
        diffusion,
        n,
        dt,
        d: model.dim(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEntry {
    pub gap: f64,
    pub stderr: f64,
}

/// Diagnostic surrogate for the conditional score covariance given the
/// marginals: the spread of the total score over pairings drawn from a
/// computed coupling rather than from the true posterior over pairings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformationGap {
    pub per_coefficient: Vec<(MultiIndex, GapEntry)>,
    pub diffusion: GapEntry,
    pub n_resample: usize,
}

/// Draws a one-to-one pairing guided by the plan: sources are visited in a
/// random order and each picks an unused destination with probability
/// proportional to its plan weight (uniformly if all such weights vanish).
fn sample_pairing(weights: &ndarray::Array2<f64>, rng: &mut impl Rng) -> Vec<usize> {
    let n = weights.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut used = vec![false; n];
    let mut pairing = vec![0; n];
    let mut free = n;
    for &i in &order {
        let row = weights.row(i);
        let total: f64 = row.iter().zip(&used).filter(|(_, u)| !**u).map(|(w, _)| *w).sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            let mut last = 0;
            for (j, w) in row.iter().enumerate() {
                if used[j] || *w <= 0.0 {
                    continue;
                }
                last = j;
                if u < *w {
                    pick = Some(j);
                    break;
                }
                u -= w;
            }
            pick.unwrap_or(last)
        } else {
            let k = rng.random_range(0..free);
            (0..n).filter(|j| !used[*j]).nth(k).unwrap_or(0)
        };
        used[pick] = true;
        free -= 1;
        pairing[i] = pick;
    }
    pairing
}

/// Monte-Carlo information gap: across `n_resample` pairings of the endpoint
/// clouds drawn from `coupling`, the variance of the total score per parameter.
pub fn information_gap_estimate(
    model: &LangevinModel,
    trajs: &TrajectorySet,
    coupling: &Coupling,
    n_resample: usize,
    seed: u64,
) -> Result<InformationGap> {
    model.validate()?;
    let p = polynomial(model)?;
    check_dim(model.dim(), trajs.dim())?;
    if trajs.n_times() != 2 {
        return Err(Error::invalid("information gap needs exactly two observation times"));
    }
    let n = trajs.n_paths();
    if coupling.shape() != (n, n) {
        return Err(Error::invalid(format!(
            "coupling of shape {:?} does not match two clouds of {n} samples",
            coupling.shape()
        )));
    }
    if n_resample < 2 {
        return Err(Error::invalid("need at least two resampled pairings"));
    }
    let dt = trajs.times[1] - trajs.times[0];
    let (x0, x1) = (trajs.samples_at(0), trajs.samples_at(1));
    let base = rng::derive_seed(seed, tag::RESAMPLE);
    let n_params = GradientBasis::new(model.dim(), p.degree()).len() + 1;
    let totals: Vec<Vec<f64>> = (0..n_resample)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(base, b as u64);
            let pairing = sample_pairing(&coupling.weights, &mut r);
            let mut sc = Scorer::new(model, p.degree());
            let mut out = vec![0.0; sc.n_params()];
            let mut total = vec![0.0; sc.n_params()];
            for (i, &j) in pairing.iter().enumerate() {
                sc.score(&x0.row(i).to_vec(), &x1.row(j).to_vec(), dt, &mut out);
                total.iter_mut().zip(&out).for_each(|(t, o)| *t += o);
            }
            total
        })
        .collect();
    let entry = |k: usize| {
        let col: Vec<f64> = totals.iter().map(|t| t[k]).collect();
        let (_, _, var, se) = variance_with_stderr(&col);
        GapEntry { gap: var, stderr: se }
    };
    let basis = GradientBasis::new(model.dim(), p.degree());
    Ok(InformationGap {
        per_coefficient: basis.indices().iter().enumerate().map(|(k, a)| (a.clone(), entry(k))).collect(),
        diffusion: entry(n_params - 1),
        n_resample,
    })
}
