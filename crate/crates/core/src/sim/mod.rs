//! Euler–Maruyama simulation, initial laws, and conversion of coupled
//! trajectories into shuffled marginal snapshots.

mod initial;

pub use initial::{sample_initial, GibbsSampler, InitialDistribution};

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::model::LangevinModel;
use crate::rng;

/// Coordinates beyond this magnitude abort a simulation.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Coupled sample paths on a shared time grid; `paths` is `N × T × d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySet {
    pub times: Vec<f64>,
    pub paths: Array3<f64>,
    pub seed: u64,
}

impl TrajectorySet {
    pub fn new(times: Vec<f64>, paths: Array3<f64>, seed: u64) -> Result<Self> {
        check_times(&times)?;
        check_dim(times.len(), paths.len_of(Axis(1)))?;
        if paths.len_of(Axis(0)) == 0 {
            return Err(Error::invalid("trajectory set needs at least one path"));
        }
        if paths.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory set contains non-finite values"));
        }
        Ok(TrajectorySet { times, paths, seed })
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len_of(Axis(0))
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn dim(&self) -> usize {
        self.paths.len_of(Axis(2))
    }

    /// The `N × d` cloud at time index `t`.
    pub fn samples_at(&self, t: usize) -> ArrayView2<'_, f64> {
        self.paths.index_axis(Axis(1), t)
    }

    pub fn final_samples(&self) -> Array2<f64> {
        self.samples_at(self.n_times() - 1).to_owned()
    }

    /// Keeps only the listed time indices (in the given order, which must be increasing).
    pub fn select_times(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i >= self.n_times()) {
            return Err(Error::invalid("time index out of range"));
        }
        let times: Vec<f64> = indices.iter().map(|&i| self.times[i]).collect();
        let paths = self.paths.select(Axis(1), indices);
        TrajectorySet::new(times, paths, self.seed)
    }
}

/// One marginal observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub samples: Array2<f64>,
}

/// Time-ordered marginals with no coupling information between them.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSeries {
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotSeries {
    pub fn new(snapshots: Vec<Snapshot>) -> Result<Self> {
        let times: Vec<f64> = snapshots.iter().map(|s| s.time).collect();
        check_times(&times)?;
        let d = snapshots.first().map(|s| s.samples.ncols()).unwrap_or(0);
        for s in &snapshots {
            if s.samples.nrows() == 0 {
                return Err(Error::invalid(format!("snapshot at t={} is empty", s.time)));
            }
            check_dim(d, s.samples.ncols())?;
        }
        Ok(SnapshotSeries { snapshots })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.snapshots.first().map(|s| s.samples.ncols()).unwrap_or(0)
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    /// Sub-series over a contiguous index range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        SnapshotSeries::new(self.snapshots[range].to_vec())
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("time grid contains non-finite values"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("times must be strictly increasing"));
    }
    Ok(())
}

/// Uniform grid `0, dt, …, n_steps·dt`.
pub fn uniform_times(dt: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|i| i as f64 * dt).collect()
}

fn check_state(x: &[f64], path: Option<usize>, step: usize) -> Result<()> {
    for &v in x {
        if !v.is_finite() || v.abs() > DIVERGENCE_BOUND {
            return Err(Error::Divergence { path, step, value: v });
        }
    }
    Ok(())
}

/// `x − ∇Ψ(x)·dt + √(σ²·dt)·z`.
pub fn euler_maruyama_step(model: &LangevinModel, x: &[f64], dt: f64, z: &[f64]) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    check_dim(model.dim(), x.len())?;
    check_dim(model.dim(), z.len())?;
    let mut out = vec![0.0; x.len()];
    em_step_into(model, x, dt, z, &mut out);
    check_state(&out, None, 1)?;
    Ok(out)
}

#[inline]
fn em_step_into(model: &LangevinModel, x: &[f64], dt: f64, z: &[f64], out: &mut [f64]) {
    model.potential.gradient_into(x, out);
    let s = (model.sigma2 * dt).sqrt();
    for i in 0..x.len() {
        out[i] = x[i] - out[i] * dt + s * z[i];
    }
}

/// Simulates one path per row of `init` over `times` (which must start at 0).
///
/// Path `i` draws its normals from stream `i` of the simulation seed, one
/// `d`-vector per step, so results do not depend on thread scheduling.
pub fn simulate(model: &LangevinModel, init: ArrayView2<'_, f64>, times: &[f64], seed: u64) -> Result<TrajectorySet> {
    model.validate_for_simulation()?;
    check_times(times)?;
    if times[0] != 0.0 {
        return Err(Error::invalid("time grid must start at 0"));
    }
    let d = model.dim();
    check_dim(d, init.ncols())?;
    let n = init.nrows();
    if n == 0 {
        return Err(Error::invalid("need at least one initial point"));
    }
    let t_len = times.len();
    let sim_seed = rng::derive_seed(seed, rng::tag::SIMULATE);

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut r = rng::stream(sim_seed, i as u64);
            let mut path = vec![0.0; t_len * d];
            path[..d].iter_mut().zip(init.row(i)).for_each(|(p, v)| *p = *v);
            check_state(&path[..d], Some(i), 0)?;
            let mut z = vec![0.0; d];
            for s in 1..t_len {
                let dt = times[s] - times[s - 1];
                rng::fill_normal(&mut r, &mut z);
                let (prev, next) = path.split_at_mut(s * d);
                let x = &prev[(s - 1) * d..];
                em_step_into(model, x, dt, &z, &mut next[..d]);
                check_state(&next[..d], Some(i), s)?;
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;

    let mut paths = Array3::zeros((n, t_len, d));
    for (i, row) in rows.iter().enumerate() {
        for s in 0..t_len {
            for k in 0..d {
                paths[[i, s, k]] = row[s * d + k];
            }
        }
    }
    TrajectorySet::new(times.to_vec(), paths, seed)
}

/// Destroys the coupling between times by independently permuting the rows
/// of every snapshot.
pub fn shuffle_to_snapshots(trajs: &TrajectorySet, seed: u64) -> SnapshotSeries {
    let seed = rng::derive_seed(seed, rng::tag::SHUFFLE);
    let snapshots = (0..trajs.n_times())
        .map(|t| {
            let cloud = trajs.samples_at(t);
            let mut order: Vec<usize> = (0..cloud.nrows()).collect();
            order.shuffle(&mut rng::stream(seed, t as u64));
            Snapshot {
                time: trajs.times[t],
                samples: cloud.select(Axis(0), &order),
            }
        })
        .collect();
    SnapshotSeries { snapshots }
}

/// Like [`shuffle_to_snapshots`] but only for the listed time indices.
pub fn shuffle_selected(trajs: &TrajectorySet, indices: &[usize], seed: u64) -> Result<SnapshotSeries> {
    Ok(shuffle_to_snapshots(&trajs.select_times(indices)?, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{NamedKind, Potential};
    use ndarray::array;

    fn quad(sigma2: f64) -> LangevinModel {
        LangevinModel::new(Potential::named(NamedKind::Quadratic), sigma2).unwrap()
    }

    #[test]
    fn deterministic_drift_step() {
        let x = euler_maruyama_step(&quad(0.3), &[1.0, 0.0], 0.1, &[0.0, 0.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && x[1] == 0.0);
    }

    #[test]
    fn zero_drift_zero_noise_is_identity() {
        let flat = LangevinModel::new(
            Potential::Polynomial(crate::potentials::PolynomialPotential::zero(2, 2)),
            1.0,
        )
        .unwrap();
        assert_eq!(
            euler_maruyama_step(&flat, &[0.3, -0.7], 0.5, &[0.0, 0.0]).unwrap(),
            vec![0.3, -0.7]
        );
    }

    #[test]
    fn step_variance() {
        let flat = LangevinModel::new(
            Potential::Polynomial(crate::potentials::PolynomialPotential::zero(2, 2)),
            1.0,
        )
        .unwrap();
        let mut r = rng::stream(5, 0);
        let n = 100_000;
        let mut acc = [0.0f64; 2];
        let mut z = [0.0; 2];
        for _ in 0..n {
            rng::fill_normal(&mut r, &mut z);
            let x = euler_maruyama_step(&flat, &[0.0, 0.0], 0.01, &z).unwrap();
            acc[0] += x[0] * x[0];
            acc[1] += x[1] * x[1];
        }
        for a in acc {
            assert!((a / n as f64 - 0.01).abs() <= 3e-4);
        }
    }

    #[test]
    fn divergence_is_reported_with_path() {
        let m = LangevinModel::new(Potential::named(NamedKind::Quadratic), 0.1).unwrap();
        let init = array![[0.1, 0.1], [2e5, 0.0]];
        // dt = 3 gives the multiplier (1 − 6) = −5 per step
        let err = simulate(&m, init.view(), &[0.0, 3.0, 6.0, 9.0, 12.0], 1).unwrap_err();
        match err {
            Error::Divergence { path, .. } => assert_eq!(path, Some(1)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn noiseless_ou_single_step_is_exact() {
        let ou = LangevinModel::noiseless(Potential::quadratic(2).scaled(0.5));
        let init = array![[1.5, -2.0]];
        let t = simulate(&ou, init.view(), &[0.0, 0.01], 3).unwrap();
        // x − Δt·x, evaluated in the same order as the scheme
        assert_eq!(t.paths[[0, 1, 0]], 1.5 - 0.01 * 1.5);
        assert_eq!(t.paths[[0, 1, 1]], -2.0 - 0.01 * -2.0);
        assert!((t.paths[[0, 1, 0]] - 1.485).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        let m = quad(0.2);
        let init = array![[0.0, 0.0]];
        assert!(simulate(&m, init.view(), &[0.1, 0.2], 0).is_err());
        assert!(simulate(&m, init.view(), &[0.0, 0.2, 0.2], 0).is_err());
    }

    #[test]
    fn shuffle_preserves_multisets() {
        let m = quad(0.2);
        let init = sample_initial(&InitialDistribution::UniformBox { half_length: 4.0 }, 2, 200, 1).unwrap();
        let t = simulate(&m, init.view(), &uniform_times(0.01, 5), 2).unwrap();
        let s = shuffle_to_snapshots(&t, 9);
        assert_eq!(s.len(), 6);
        let mut moved = 0;
        for (k, snap) in s.snapshots.iter().enumerate() {
            let sort = |a: ArrayView2<f64>| {
                let mut rows: Vec<Vec<f64>> = a.rows().into_iter().map(|r| r.to_vec()).collect();
                rows.sort_by(|x, y| x.partial_cmp(y).unwrap());
                rows
            };
            assert_eq!(sort(snap.samples.view()), sort(t.samples_at(k)));
            moved += (0..200).filter(|&i| snap.samples.row(i) != t.samples_at(k).row(i)).count();
        }
        assert!(moved > 1000);
    }

    #[test]
    fn single_path_shuffle_is_identity() {
        let m = quad(0.2);
        let init = array![[0.5, 0.5]];
        let t = simulate(&m, init.view(), &uniform_times(0.01, 3), 2).unwrap();
        let s = shuffle_to_snapshots(&t, 1);
        for (k, snap) in s.snapshots.iter().enumerate() {
            assert_eq!(snap.samples.view(), t.samples_at(k));
        }
    }
}
