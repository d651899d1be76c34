//! Entropic optimal transport between consecutive snapshots.
//!
//! Iterations run on a truncated sparse kernel in the stabilized
//! (absorption) form: the plan is `π_ij = u_i exp(−(C_ij − f_i − g_j)/ε) v_j`
//! and the scalings `u, v` are folded into the duals `f, g` whenever they
//! grow large, after which the kernel is rebuilt. Entries whose reduced cost
//! exceeds `ε·(ln(n₀n₁) + TRUNCATION)` are dropped; their mass is below
//! `e^{−TRUNCATION}` of the smallest marginal entry.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::LangevinModel;

const TRUNCATION: f64 = 20.0;
const ABSORB: f64 = 30.0;
const CHECK_EVERY: usize = 5;
/// Geometric decrease of ε between scaling stages.
const STAGE_FACTOR: f64 = 0.5;
/// Starting ε relative to the target when warm-started.
const WARM_SCALING: f64 = 8.0;
const COLD_SCALING: f64 = 64.0;
const STAGE_TOL: f64 = 1e-3;
const STAGE_ITER: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    /// `ε = epsilon_scale · σ² · Δt`.
    pub epsilon_scale: f64,
    pub max_iter: usize,
    /// Bound on the total (L¹) marginal violation.
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            epsilon_scale: 1.0,
            max_iter: 2_000,
            tol: 1e-3,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_scale > 0.0 && self.epsilon_scale.is_finite()) {
            return Err(Error::invalid("epsilon_scale must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("sinkhorn tol must be positive"));
        }
        Ok(())
    }
}

/// A transport plan between two sample clouds.
#[derive(Clone, Debug, PartialEq)]
pub struct Coupling {
    pub weights: Array2<f64>,
    /// Row sums of `weights`.
    pub row_marginal: Vec<f64>,
    /// Column sums of `weights`.
    pub col_marginal: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// L¹ distance of the marginals from uniform.
    pub marginal_error: f64,
}

impl Coupling {
    /// Wraps a nonnegative matrix whose entries sum to one.
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("coupling must be nonempty"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("coupling weights must be finite and nonnegative"));
        }
        let total: f64 = weights.sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!("coupling mass is {total}, expected 1")));
        }
        Ok(Self::from_weights(weights, true, 0))
    }

    fn from_weights(weights: Array2<f64>, converged: bool, iterations: usize) -> Self {
        let row_marginal: Vec<f64> = weights.rows().into_iter().map(|r| r.sum()).collect();
        let col_marginal: Vec<f64> = weights.columns().into_iter().map(|c| c.sum()).collect();
        let (a, b) = (1.0 / row_marginal.len() as f64, 1.0 / col_marginal.len() as f64);
        let marginal_error = row_marginal.iter().map(|r| (r - a).abs()).sum::<f64>()
            + col_marginal.iter().map(|c| (c - b).abs()).sum::<f64>();
        Coupling {
            weights,
            row_marginal,
            col_marginal,
            converged,
            iterations,
            marginal_error,
        }
    }

    /// Uniform plan on the pairs `(i, perm[i])`.
    pub fn from_permutation(perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        let mut w = Array2::zeros((n, n));
        for (i, &j) in perm.iter().enumerate() {
            if j >= n || seen[j] {
                return Err(Error::invalid("not a permutation"));
            }
            seen[j] = true;
            w[[i, j]] = 1.0 / n as f64;
        }
        Ok(Self::from_weights(w, true, 0))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.weights.dim()
    }

    /// `−Σ π log π`.
    pub fn entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|w| **w > 0.0)
            .map(|w| w * w.ln())
            .sum::<f64>()
    }
}

/// Kantorovich potentials, reusable as a warm start.
#[derive(Clone, Debug, Default)]
pub(crate) struct Duals {
    pub g: Vec<f64>,
}

/// Squared distances from the drift-advected sources to the targets.
fn cost_matrix(x0: ArrayView2<'_, f64>, x1: ArrayView2<'_, f64>, guess: &LangevinModel, dt: f64) -> Array2<f64> {
    let d = x0.ncols();
    let mut grad = vec![0.0; d];
    let mut m = vec![0.0; d];
    let mut c = Array2::zeros((x0.nrows(), x1.nrows()));
    for (i, xi) in x0.rows().into_iter().enumerate() {
        let xi = xi.to_vec();
        guess.potential.gradient_into(&xi, &mut grad);
        for k in 0..d {
            m[k] = xi[k] - dt * grad[k];
        }
        for (j, yj) in x1.rows().into_iter().enumerate() {
            let mut s = 0.0;
            for k in 0..d {
                let r = yj[k] - m[k];
                s += r * r;
            }
            c[[i, j]] = s;
        }
    }
    c
}

/// Row-compressed kernel `exp(−(C − f − g)/ε)` over retained entries.
struct Kernel {
    start: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Kernel {
    fn build(c: &Array2<f64>, f: &[f64], g: &[f64], eps: f64, cutoff: f64) -> Self {
        let (n0, n1) = c.dim();
        let mut start = Vec::with_capacity(n0 + 1);
        let mut col = Vec::new();
        let mut val = Vec::new();
        start.push(0);
        for i in 0..n0 {
            for j in 0..n1 {
                let red = (c[[i, j]] - f[i] - g[j]) / eps;
                if red <= cutoff {
                    col.push(j);
                    val.push((-red).exp());
                }
            }
            start.push(col.len());
        }
        Kernel { start, col, val }
    }

    fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        (self.start[i]..self.start[i + 1]).map(|k| self.val[k] * v[self.col[k]]).sum()
    }

    fn transpose_dot(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.start.len() - 1 {
            let ui = u[i];
            for k in self.start[i]..self.start[i + 1] {
                out[self.col[k]] += self.val[k] * ui;
            }
        }
    }
}

struct State {
    f: Vec<f64>,
    g: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    kernel: Kernel,
}

impl State {
    fn absorb(&mut self, eps: f64) {
        for (f, u) in self.f.iter_mut().zip(&mut self.u) {
            *f += eps * u.ln();
            *u = 1.0;
        }
        for (g, v) in self.g.iter_mut().zip(&mut self.v) {
            *g += eps * v.ln();
            *v = 1.0;
        }
    }

    fn rebuild(&mut self, c: &Array2<f64>, eps: f64, cutoff: f64) {
        self.kernel = Kernel::build(c, &self.f, &self.g, eps, cutoff);
    }

    /// Runs scaling updates until the L¹ row violation drops below `tol`
    /// (columns are exact after each update) or `budget` is spent.
    #[allow(clippy::too_many_arguments)]
    fn iterate(&mut self, c: &Array2<f64>, eps: f64, cutoff: f64, a: f64, b: f64, tol: f64, budget: usize) -> (bool, usize) {
        let (n0, n1) = c.dim();
        let mut ktu = vec![0.0; n1];
        let mut used = 0;
        while used < budget {
            used += 1;
            for i in 0..n0 {
                self.u[i] = a / self.kernel.row_dot(i, &self.v);
            }
            self.kernel.transpose_dot(&self.u, &mut ktu);
            for j in 0..n1 {
                self.v[j] = b / ktu[j];
            }
            let finite = self.u.iter().chain(&self.v).all(|s| s.is_finite() && *s > 0.0);
            if !finite {
                // a row or column lost all retained entries: re-anchor the duals
                self.f = c_transform_rows(c, &self.g);
                self.g = c_transform_cols(c, &self.f);
                self.u.iter_mut().for_each(|s| *s = 1.0);
                self.v.iter_mut().for_each(|s| *s = 1.0);
                self.rebuild(c, eps, cutoff);
                continue;
            }
            if self.u.iter().chain(&self.v).any(|s| s.ln().abs() > ABSORB) {
                self.absorb(eps);
                self.rebuild(c, eps, cutoff);
                continue;
            }
            if used % CHECK_EVERY == 0 {
                let err: f64 = (0..n0).map(|i| (self.u[i] * self.kernel.row_dot(i, &self.v) - a).abs()).sum();
                if err < tol {
                    return (true, used);
                }
            }
        }
        (false, used)
    }
}

/// `f_i = min_j (C_ij − g_j)`.
fn c_transform_rows(c: &Array2<f64>, g: &[f64]) -> Vec<f64> {
    c.rows()
        .into_iter()
        .map(|r| r.iter().zip(g).map(|(cij, gj)| cij - gj).fold(f64::INFINITY, f64::min))
        .collect()
}

/// `g_j = min_i (C_ij − f_i)`.
fn c_transform_cols(c: &Array2<f64>, f: &[f64]) -> Vec<f64> {
    c.columns()
        .into_iter()
        .map(|col| col.iter().zip(f).map(|(cij, fi)| cij - fi).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Entropic plan between uniform weights on `x0` and `x1` for the cost
/// `C_ij = ‖x1_j − (x0_i − Δt ∇Ψ(x0_i))‖²` and `ε = epsilon_scale · σ² · Δt`
/// of the guessed model. Returns the best plan found with `converged = false`
/// if the marginal tolerance is not met within `max_iter` iterations.
pub fn sinkhorn_coupling(
    x0: ArrayView2<'_, f64>,
    x1: ArrayView2<'_, f64>,
    guess: &LangevinModel,
    dt: f64,
    config: &SinkhornConfig,
) -> Result<Coupling> {
    Ok(sinkhorn_warm(x0, x1, guess, dt, config, None)?.0)
}

pub(crate) fn sinkhorn_warm(
    x0: ArrayView2<'_, f64>,
    x1: ArrayView2<'_, f64>,
    guess: &LangevinModel,
    dt: f64,
    config: &SinkhornConfig,
    warm: Option<&Duals>,
) -> Result<(Coupling, Duals)> {
    config.validate()?;
    guess.validate()?;
    check_dim(guess.dim(), x0.ncols())?;
    check_dim(x0.ncols(), x1.ncols())?;
    if x0.nrows() == 0 || x1.nrows() == 0 {
        return Err(Error::invalid("sinkhorn needs nonempty clouds"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let (n0, n1) = (x0.nrows(), x1.nrows());
    let (a, b) = (1.0 / n0 as f64, 1.0 / n1 as f64);
    if n0 == 1 || n1 == 1 {
        // one side is a point mass: the product plan is the only coupling
        let w = Array2::from_elem((n0, n1), a * b);
        return Ok((Coupling::from_weights(w, true, 0), Duals::default()));
    }
    let eps = config.epsilon_scale * guess.sigma2 * dt;
    let c = cost_matrix(x0, x1, guess, dt);
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite transport cost".into()));
    }

    let mut g = match warm {
        Some(w) if w.g.len() == n1 => w.g.clone(),
        _ => vec![0.0; n1],
    };
    let f = c_transform_rows(&c, &g);
    // ε-scaling: solve a short sequence of blurrier problems first so that
    // mass can move across the cloud in few iterations
    let start_eps = match warm {
        Some(w) if w.g.len() == n1 => WARM_SCALING * eps,
        _ => {
            g = c_transform_cols(&c, &f);
            let top = c.iter().fold(eps, |m, v| m.max(*v));
            top.min(COLD_SCALING * eps)
        }
    };
    let mut schedule = Vec::new();
    let mut e = start_eps;
    while e > eps {
        schedule.push(e);
        e *= STAGE_FACTOR;
    }
    schedule.push(eps);

    let mut state = State {
        f,
        g,
        u: vec![1.0; n0],
        v: vec![1.0; n1],
        kernel: Kernel { start: vec![0; n0 + 1], col: Vec::new(), val: Vec::new() },
    };
    let mut converged = false;
    let mut iterations = 0;
    for (k, &stage_eps) in schedule.iter().enumerate() {
        let last = k + 1 == schedule.len();
        let cutoff = ((n0 * n1) as f64).ln() + TRUNCATION;
        state.rebuild(&c, stage_eps, cutoff);
        let remaining = config.max_iter.saturating_sub(iterations).max(1);
        let (stage_tol, budget) = if last {
            (config.tol, remaining)
        } else {
            (STAGE_TOL.max(config.tol), STAGE_ITER.min(remaining))
        };
        let (ok, used) = state.iterate(&c, stage_eps, cutoff, a, b, stage_tol, budget);
        iterations += used;
        if last {
            converged = ok;
        } else {
            state.absorb(stage_eps);
        }
    }
    let State { mut g, u, v, kernel, .. } = state;
    let mut w = Array2::zeros((n0, n1));
    for i in 0..n0 {
        for k in kernel.start[i]..kernel.start[i + 1] {
            let j = kernel.col[k];
            w[[i, j]] = u[i] * kernel.val[k] * v[j];
        }
    }
    let mut coupling = Coupling::from_weights(w, converged, iterations);
    if !coupling.weights.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical("sinkhorn produced non-finite weights".into()));
    }
    coupling.converged = converged && coupling.marginal_error <= config.tol;
    for j in 0..n1 {
        g[j] += eps * v[j].ln();
    }
    Ok((coupling, Duals { g }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{NamedKind, Potential};
    use ndarray::array;

    fn zero_drift(sigma2: f64) -> LangevinModel {
        LangevinModel::new(Potential::named(NamedKind::Quadratic).scaled(0.0), sigma2).unwrap()
    }

    #[test]
    fn singleton_is_trivial() {
        let c = sinkhorn_coupling(array![[0.3, 1.0]].view(), array![[5.0, 2.0]].view(), &zero_drift(1.0), 0.1, &SinkhornConfig::default()).unwrap();
        assert_eq!(c.weights, array![[1.0]]);
        assert!(c.converged);
    }

    #[test]
    fn small_epsilon_matches_nearest_neighbour_permutation() {
        let x0 = array![[0.0, 0.0], [10.0, 0.0]];
        let x1 = array![[10.1, 0.0], [0.1, 0.0]];
        let c = sinkhorn_coupling(x0.view(), x1.view(), &zero_drift(0.01), 0.1, &SinkhornConfig::default()).unwrap();
        assert!(c.weights[[0, 1]] + c.weights[[1, 0]] >= 0.99);
        assert!(c.converged);
    }

    #[test]
    fn large_epsilon_approaches_independence() {
        let x0 = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let x1 = array![[0.1, 0.0], [1.0, 0.1], [0.0, 0.9]];
        let c = sinkhorn_coupling(x0.view(), x1.view(), &zero_drift(1e6), 1.0, &SinkhornConfig::default()).unwrap();
        assert!(c.weights.iter().all(|w| (w - 1.0 / 9.0).abs() < 1e-5));
    }

    #[test]
    fn permutation_coupling_has_uniform_marginals() {
        let c = Coupling::from_permutation(&[2, 0, 1]).unwrap();
        assert!(c.marginal_error < 1e-15);
        assert!((c.entropy() - 3f64.ln()).abs() < 1e-12);
        assert!(Coupling::from_permutation(&[0, 0, 1]).is_err());
    }
}
