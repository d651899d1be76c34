//! Two-sample energy distance with a permutation p-value.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{self, tag};
use crate::sim::SnapshotSeries;

pub const DEFAULT_PERMUTATIONS: usize = 200;
/// Smallest sample accepted on either side of a test.
pub const MIN_SAMPLES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleTest {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
}

impl TwoSampleTest {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value <= level
    }
}

/// One consecutive-pair entry of a stationarity report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityRecord {
    pub t_i: f64,
    pub t_j: f64,
    pub statistic: f64,
    pub p_value: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn rows(x: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn pair_sum(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    x.iter().map(|a| y.iter().map(|b| dist(a, b)).sum::<f64>()).sum()
}

/// V-statistic energy distance `2E‖X−Y‖ − E‖X−X'‖ − E‖Y−Y'‖`.
/// Identical inputs give exactly zero.
pub fn energy_distance(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Result<f64> {
    check_dim(x.ncols(), y.ncols())?;
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::invalid("energy distance needs nonempty samples"));
    }
    let (n, m) = (x.nrows() as f64, y.nrows() as f64);
    let (x, y) = (rows(x), rows(y));
    let xy = pair_sum(&x, &y) / (n * m);
    let xx = pair_sum(&x, &x) / (n * n);
    let yy = pair_sum(&y, &y) / (m * m);
    Ok(2.0 * xy - xx - yy)
}

/// Pooled pairwise distances, stored densely.
struct Pooled {
    n: usize,
    d: Vec<f64>,
    row_sums: Vec<f64>,
}

impl Pooled {
    fn new(x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>) -> Self {
        let mut pts = rows(x);
        pts.extend(rows(y));
        let n = pts.len();
        let mut d = vec![0.0; n * n];
        d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = dist(&pts[i], &pts[j]);
            }
        });
        let row_sums = d.chunks(n).map(|r| r.iter().sum()).collect();
        Pooled { n, d, row_sums }
    }

    fn within(&self, idx: &[usize]) -> f64 {
        let mut s = 0.0;
        for (a, &i) in idx.iter().enumerate() {
            let row = &self.d[i * self.n..(i + 1) * self.n];
            for &j in &idx[a + 1..] {
                s += row[j];
            }
        }
        2.0 * s
    }

    /// Energy statistic for the split `labels[..n1]` vs `labels[n1..]`.
    fn statistic(&self, labels: &[usize], n1: usize) -> f64 {
        let (xs, ys) = labels.split_at(n1);
        let sxx = self.within(xs);
        let syy = self.within(ys);
        let rx: f64 = xs.iter().map(|&i| self.row_sums[i]).sum();
        let sxy = rx - sxx;
        let (a, b) = (n1 as f64, ys.len() as f64);
        2.0 * sxy / (a * b) - sxx / (a * a) - syy / (b * b)
    }
}

/// Energy-distance two-sample test with `permutations` label shuffles.
/// The p-value is `(1 + #{permuted ≥ observed}) / (permutations + 1)`.
pub fn two_sample_test(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    permutations: usize,
    seed: u64,
) -> Result<TwoSampleTest> {
    check_dim(x.ncols(), y.ncols())?;
    if x.nrows() < MIN_SAMPLES || y.nrows() < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "two-sample test needs at least {MIN_SAMPLES} samples per side (got {} and {})",
            x.nrows(),
            y.nrows()
        )));
    }
    let statistic = energy_distance(x, y)?;
    let pooled = Pooled::new(x, y);
    let n1 = x.nrows();
    let identity: Vec<usize> = (0..pooled.n).collect();
    let observed = pooled.statistic(&identity, n1);
    // guard against round-off ties between the two evaluation orders
    let threshold = observed - 1e-12 * observed.abs().max(1e-300);
    let base = rng::derive_seed(seed, tag::PERMUTATION);
    let exceed: usize = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut labels = identity.clone();
            labels.shuffle(&mut rng::stream(base, b as u64));
            usize::from(pooled.statistic(&labels, n1) >= threshold)
        })
        .sum();
    Ok(TwoSampleTest {
        statistic,
        p_value: (1 + exceed) as f64 / (permutations + 1) as f64,
        permutations,
    })
}

/// Tests every consecutive pair of snapshots for a change in distribution.
pub fn stationarity_test(series: &SnapshotSeries, permutations: usize, seed: u64) -> Result<Vec<StationarityRecord>> {
    if series.len() < 2 {
        return Err(Error::invalid("stationarity test needs at least two snapshots"));
    }
    series
        .snapshots
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let t = two_sample_test(w[0].samples.view(), w[1].samples.view(), permutations, seed.wrapping_add(i as u64))?;
            Ok(StationarityRecord {
                t_i: w[0].time,
                t_j: w[1].time,
                statistic: t.statistic,
                p_value: t.p_value,
            })
        })
        .collect()
}
