use log::warn;
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::model::LangevinModel;
use crate::rng;
use crate::sim::{simulate, uniform_times};

pub const DEFAULT_MH_STEPS: usize = 5000;
pub const TARGET_ACCEPTANCE: f64 = 0.3;
const START_HALF_LENGTH: f64 = 4.0;

/// Unnormalized log Gibbs density `−2Ψ(x)/σ²`.
pub fn gibbs_log_density(model: &LangevinModel, x: &[f64]) -> Result<f64> {
    Ok(-2.0 * model.potential.value(x)? / model.sigma2)
}

/// `(αΨ, ασ²)`: same Gibbs law, dynamics sped up by `α`.
pub fn rescaled_model(model: &LangevinModel, alpha: f64) -> Result<LangevinModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("rescaling factor must be positive, got {alpha}")));
    }
    Ok(LangevinModel {
        potential: model.potential.scaled(alpha),
        sigma2: model.sigma2 * alpha,
    })
}

#[derive(Clone, Debug)]
pub struct MetropolisOutput {
    /// Final state of every chain, `n × d`.
    pub samples: Array2<f64>,
    pub acceptance_rate: f64,
    pub warnings: Vec<String>,
}

fn run_chain(
    model: &LangevinModel,
    start: &[f64],
    steps: usize,
    scale: f64,
    rng: &mut impl Rng,
) -> (Vec<f64>, usize) {
    let d = start.len();
    let mut x = start.to_vec();
    let inv = -2.0 / model.sigma2;
    let mut lp = inv * model.potential.value_unchecked(&x);
    let mut prop = vec![0.0; d];
    let mut accepted = 0;
    for _ in 0..steps {
        for i in 0..d {
            prop[i] = x[i] + scale * rng::normal(rng);
        }
        let lq = inv * model.potential.value_unchecked(&prop);
        let u: f64 = rng.random();
        if lq - lp >= 0.0 || u.ln() < lq - lp {
            x.copy_from_slice(&prop);
            lp = lq;
            accepted += 1;
        }
    }
    (x, accepted)
}

/// Random-walk Metropolis with isotropic Gaussian proposals, started from
/// `Unif([−4, 4]^d)`; returns the final state of each of `n` chains.
pub fn metropolis_sample(
    model: &LangevinModel,
    n: usize,
    steps: usize,
    proposal_scale: f64,
    seed: u64,
) -> Result<MetropolisOutput> {
    let d = model.dim();
    let seed = rng::derive_seed(seed, rng::tag::METROPOLIS);
    let mut r = rng::stream(seed, u64::MAX);
    let start = Array2::from_shape_fn((n, d), |_| r.random_range(-START_HALF_LENGTH..START_HALF_LENGTH));
    metropolis_sample_from(model, start.view(), steps, proposal_scale, seed)
}

/// Same as [`metropolis_sample`] with explicit chain starting points.
pub fn metropolis_sample_from(
    model: &LangevinModel,
    start: ArrayView2<'_, f64>,
    steps: usize,
    proposal_scale: f64,
    seed: u64,
) -> Result<MetropolisOutput> {
    model.validate()?;
    check_dim(model.dim(), start.ncols())?;
    if steps == 0 {
        return Err(Error::invalid("Metropolis needs at least one step"));
    }
    if !(proposal_scale > 0.0 && proposal_scale.is_finite()) {
        return Err(Error::invalid("proposal scale must be positive"));
    }
    let n = start.nrows();
    if n == 0 {
        return Err(Error::invalid("need at least one chain"));
    }
    let d = model.dim();
    let chains: Vec<(Vec<f64>, usize)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(seed, j as u64);
            let s = start.row(j).to_vec();
            run_chain(model, &s, steps, proposal_scale, &mut r)
        })
        .collect();
    let mut samples = Array2::zeros((n, d));
    let mut accepted = 0usize;
    for (j, (x, a)) in chains.into_iter().enumerate() {
        samples.row_mut(j).iter_mut().zip(&x).for_each(|(s, v)| *s = *v);
        accepted += a;
    }
    let acceptance_rate = accepted as f64 / (n * steps) as f64;
    let mut warnings = Vec::new();
    if !(0.05..=0.95).contains(&acceptance_rate) {
        let msg = format!(
            "Metropolis acceptance rate {acceptance_rate:.3} outside [0.05, 0.95] (proposal scale {proposal_scale})"
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    Ok(MetropolisOutput {
        samples,
        acceptance_rate,
        warnings,
    })
}

/// Tunes the proposal scale towards [`TARGET_ACCEPTANCE`] with a short
/// adaptive pre-pass (64 chains, 20 rounds of 50 steps).
pub fn tune_proposal_scale(model: &LangevinModel, seed: u64) -> Result<f64> {
    model.validate()?;
    let d = model.dim();
    let chains = 64;
    let seed = rng::derive_seed(seed ^ 0x7475_6e65, rng::tag::METROPOLIS);
    let mut r = rng::stream(seed, u64::MAX);
    let mut states: Vec<Vec<f64>> = (0..chains)
        .map(|_| (0..d).map(|_| r.random_range(-START_HALF_LENGTH..START_HALF_LENGTH)).collect())
        .collect();
    let mut rngs: Vec<_> = (0..chains).map(|j| rng::stream(seed, j as u64)).collect();
    let mut scale = 0.5f64;
    for _ in 0..20 {
        let mut acc = 0;
        for (x, rr) in states.iter_mut().zip(rngs.iter_mut()) {
            let (nx, a) = run_chain(model, x, 50, scale, rr);
            *x = nx;
            acc += a;
        }
        let rate = acc as f64 / (chains * 50) as f64;
        scale *= (2.0 * (rate - TARGET_ACCEPTANCE)).exp();
    }
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::Numerical("proposal scale tuning failed".into()));
    }
    Ok(scale)
}

/// Runs `n_steps` Euler–Maruyama steps of size `dt` from `init` and returns
/// the final cloud.
pub fn langevin_burn_in(
    model: &LangevinModel,
    init: &Array2<f64>,
    n_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    if n_steps == 0 {
        return Err(Error::invalid("burn-in needs at least one step"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let t = simulate(model, init.view(), &uniform_times(dt, n_steps), seed)?;
    Ok(t.final_samples())
}
