use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::LangevinModel;
use crate::rng;
use crate::stationary;

/// How Gibbs-distributed initial samples are produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum GibbsSampler {
    /// Random-walk Metropolis; the proposal scale is tuned when absent.
    Metropolis {
        #[serde(default = "default_mh_steps")]
        steps: usize,
        #[serde(default)]
        proposal_scale: Option<f64>,
    },
    /// Langevin burn-in from `Unif([−half_length, half_length]^d)`.
    BurnIn {
        #[serde(default = "default_burn_steps")]
        n_steps: usize,
        #[serde(default = "default_burn_dt")]
        dt: f64,
        #[serde(default = "default_burn_half")]
        half_length: f64,
    },
}

fn default_mh_steps() -> usize {
    stationary::DEFAULT_MH_STEPS
}
fn default_burn_steps() -> usize {
    100
}
fn default_burn_dt() -> f64 {
    0.01
}
fn default_burn_half() -> f64 {
    4.0
}

impl Default for GibbsSampler {
    fn default() -> Self {
        GibbsSampler::Metropolis {
            steps: stationary::DEFAULT_MH_STEPS,
            proposal_scale: None,
        }
    }
}

/// Initial law `p₀` of the particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDistribution {
    /// `Unif([−r, r]^d)`.
    UniformBox { half_length: f64 },
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Independent `±r` signs per coordinate (the `2^d` corners of the box).
    Rademacher { level: f64 },
    Dirac { point: Vec<f64> },
    /// Stationary law `∝ exp(−2Ψ/σ²)` of `model`.
    Gibbs {
        model: Box<LangevinModel>,
        #[serde(default)]
        sampler: GibbsSampler,
    },
}

impl InitialDistribution {
    pub fn is_gibbs(&self) -> bool {
        matches!(self, InitialDistribution::Gibbs { .. })
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            InitialDistribution::UniformBox { half_length: r }
            | InitialDistribution::Rademacher { level: r } => {
                if !(*r > 0.0 && r.is_finite()) {
                    return Err(Error::invalid(format!("half length must be positive, got {r}")));
                }
            }
            InitialDistribution::Gaussian { mean, cov } => {
                check_dim(d, mean.len())?;
                check_dim(d, cov.len())?;
                for (i, row) in cov.iter().enumerate() {
                    check_dim(d, row.len())?;
                    for (j, v) in row.iter().enumerate() {
                        if (v - cov[j][i]).abs() > 1e-12 * (1.0 + v.abs()) {
                            return Err(Error::invalid("covariance must be symmetric"));
                        }
                    }
                }
            }
            InitialDistribution::Dirac { point } => check_dim(d, point.len())?,
            InitialDistribution::Gibbs { model, .. } => {
                check_dim(d, model.dim())?;
                model.validate()?;
            }
        }
        Ok(())
    }
}

/// Symmetric square root factor `L` with `L Lᵀ = Σ`; rejects non-PSD input.
fn psd_factor(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = cov.len();
    let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    let eig = SymmetricEigen::new(m);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if min < -1e-10 * scale.max(1e-300) {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals))
}

/// Draws `n` i.i.d. points from `dist` in dimension `d`.
pub fn sample_initial(dist: &InitialDistribution, d: usize, n: usize, seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    dist.validate(d)?;
    let seed = rng::derive_seed(seed, rng::tag::INITIAL);
    let mut r = rng::stream(seed, 0);
    let mut out = Array2::zeros((n, d));
    match dist {
        InitialDistribution::UniformBox { half_length } => {
            let h = *half_length;
            out.iter_mut().for_each(|v| *v = r.random_range(-h..h));
        }
        InitialDistribution::Rademacher { level } => {
            let l = *level;
            out.iter_mut()
                .for_each(|v| *v = if r.random::<bool>() { l } else { -l });
        }
        InitialDistribution::Dirac { point } => {
            for mut row in out.rows_mut() {
                row.iter_mut().zip(point).for_each(|(v, p)| *v = *p);
            }
        }
        InitialDistribution::Gaussian { mean, cov } => {
            let l = psd_factor(cov)?;
            let mut z = vec![0.0; d];
            for mut row in out.rows_mut() {
                rng::fill_normal(&mut r, &mut z);
                for i in 0..d {
                    row[i] = mean[i] + (0..d).map(|j| l[(i, j)] * z[j]).sum::<f64>();
                }
            }
        }
        InitialDistribution::Gibbs { model, sampler } => {
            out = match sampler {
                GibbsSampler::Metropolis {
                    steps,
                    proposal_scale,
                } => {
                    let scale = match proposal_scale {
                        Some(s) => *s,
                        None => stationary::tune_proposal_scale(model, seed)?,
                    };
                    stationary::metropolis_sample(model, n, *steps, scale, seed)?.samples
                }
                GibbsSampler::BurnIn {
                    n_steps,
                    dt,
                    half_length,
                } => {
                    let init = sample_initial(
                        &InitialDistribution::UniformBox {
                            half_length: *half_length,
                        },
                        d,
                        n,
                        seed,
                    )?;
                    stationary::langevin_burn_in(model, &init, *n_steps, *dt, seed)?
                }
            };
        }
    }
    Ok(out)
}
