//! Grid densities and the discretized Fokker–Planck operator
//! `L p = ∇·(p ∇Ψ) + (σ²/2) Δp`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::LangevinModel;

/// Nodal values of a density on a tensor grid. Axis 0 varies slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: usize,
    pub values: Vec<f64>,
    pub cell_volume: f64,
}

impl GridDensity {
    /// Samples `f` at the nodes of `[lower, upper]` with `resolution` points per axis.
    pub fn from_fn(lower: Vec<f64>, upper: Vec<f64>, resolution: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::invalid("grid needs at least one axis"));
        }
        if resolution < 2 {
            return Err(Error::invalid("grid needs at least two points per axis"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(u > l)) {
            return Err(Error::invalid("grid bounds must satisfy lower < upper"));
        }
        let d = lower.len();
        let total = resolution.pow(d as u32);
        let spacing: Vec<f64> = lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| (u - l) / (resolution - 1) as f64)
            .collect();
        let mut x = vec![0.0; d];
        let mut values = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            for axis in (0..d).rev() {
                let idx = rem % resolution;
                rem /= resolution;
                x[axis] = lower[axis] + idx as f64 * spacing[axis];
            }
            let v = f(&x);
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid("grid density values must be finite and non-negative"));
            }
            values.push(v);
        }
        Ok(GridDensity {
            lower,
            upper,
            resolution,
            values,
            cell_volume: spacing.iter().product(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / (self.resolution - 1) as f64)
            .collect()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume
    }

    /// Rescales so that `Σ values · cell_volume = 1`.
    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::Numerical("cannot normalize a density with zero mass".into()));
        }
        self.values.iter_mut().for_each(|v| *v /= m);
        Ok(())
    }

    pub fn node(&self, flat: usize, out: &mut [f64]) {
        let h = self.spacing();
        let mut rem = flat;
        for axis in (0..self.dim()).rev() {
            let idx = rem % self.resolution;
            rem /= self.resolution;
            out[axis] = self.lower[axis] + idx as f64 * h[axis];
        }
    }
}

/// Normalized Gibbs density `∝ exp(−2Ψ/σ²)` on the cube `[lower, upper]^d`.
pub fn gibbs_grid_density(model: &LangevinModel, lower: f64, upper: f64, resolution: usize) -> Result<GridDensity> {
    model.validate()?;
    let d = model.dim();
    // shift by the log density at the box centre-ish minimum to avoid overflow
    let probe = GridDensity::from_fn(vec![lower; d], vec![upper; d], resolution, |_| 0.0)?;
    let mut x = vec![0.0; d];
    let mut max_log = f64::NEG_INFINITY;
    for i in 0..probe.values.len() {
        probe.node(i, &mut x);
        max_log = max_log.max(-2.0 * model.potential.value_unchecked(&x) / model.sigma2);
    }
    let mut g = GridDensity::from_fn(vec![lower; d], vec![upper; d], resolution, |x| {
        (-2.0 * model.potential.value_unchecked(x) / model.sigma2 - max_log).exp()
    })?;
    g.normalize()?;
    Ok(g)
}

/// Applies the discretized operator `∇·(p F) + (σ²/2) Δp` with `F = ∇Ψ`
/// given by `grad`, at every interior node (one-node margin), using
/// second-order central differences on the flux `p F` and the standard
/// `2d+1` point Laplacian. Interior values are returned in row-major order.
///
/// `sigma2` may be any real so that operator differences can be formed.
pub fn fp_operator(grad: impl Fn(&[f64], &mut [f64]), sigma2: f64, density: &GridDensity) -> Result<Vec<f64>> {
    let d = density.dim();
    let n = density.resolution;
    if n < 3 {
        return Err(Error::invalid("need at least three points per axis"));
    }
    let h = density.spacing();
    let total = density.values.len();
    // flux p ∂ᵢΨ at every node
    let mut flux = vec![0.0; total * d];
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    for flat in 0..total {
        density.node(flat, &mut x);
        grad(&x, &mut g);
        for i in 0..d {
            flux[flat * d + i] = density.values[flat] * g[i];
        }
    }
    let strides: Vec<usize> = (0..d).map(|axis| n.pow((d - 1 - axis) as u32)).collect();
    let mut out = Vec::with_capacity((n - 2).pow(d as u32));
    let p = &density.values;
    'node: for flat in 0..total {
        let mut rem = flat;
        for axis in (0..d).rev() {
            let idx = rem % n;
            rem /= n;
            if idx == 0 || idx == n - 1 {
                continue 'node;
            }
            let _ = axis;
        }
        let mut v = 0.0;
        for axis in 0..d {
            let s = strides[axis];
            let (up, dn) = (flat + s, flat - s);
            v += (flux[up * d + axis] - flux[dn * d + axis]) / (2.0 * h[axis]);
            v += 0.5 * sigma2 * (p[up] - 2.0 * p[flat] + p[dn]) / (h[axis] * h[axis]);
        }
        out.push(v);
    }
    Ok(out)
}

/// Norms of the discretized Fokker–Planck residual.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpResidual {
    /// Euclidean norm of the per-cell probability-mass rates `(L p)ᵢ · cell_volume`.
    pub mass_rate_norm: f64,
    /// Discrete `L²(dx)` norm `(Σ (L p)ᵢ² · cell_volume)^{1/2}`.
    pub l2_norm: f64,
    pub max_abs: f64,
}

pub fn fp_residual_report(model: &LangevinModel, density: &GridDensity) -> Result<FpResidual> {
    check_dim(model.dim(), density.dim())?;
    if density.resolution < 16 {
        return Err(Error::invalid("residual needs at least 16 points per axis"));
    }
    let r = fp_operator(|x, g| model.potential.gradient_into(x, g), model.sigma2, density)?;
    let sq: f64 = r.iter().map(|v| v * v).sum();
    Ok(FpResidual {
        mass_rate_norm: sq.sqrt() * density.cell_volume,
        l2_norm: (sq * density.cell_volume).sqrt(),
        max_abs: r.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    })
}

/// Stationarity residual of `density` under `model`: the Euclidean norm of
/// the rate of change of probability mass in each interior cell.
pub fn fp_residual(model: &LangevinModel, density: &GridDensity) -> Result<f64> {
    Ok(fp_residual_report(model, density)?.mass_rate_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{NamedKind, Potential, PolynomialPotential, MultiIndex};

    fn quad(s2: f64) -> LangevinModel {
        LangevinModel::new(Potential::named(NamedKind::Quadratic), s2).unwrap()
    }

    #[test]
    fn gibbs_grid_normalizes_and_matches_gaussian_variance() {
        let g = gibbs_grid_density(&quad(0.2), -2.0, 2.0, 201).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-12);
        let mut x = [0.0; 2];
        let mut var = 0.0;
        for i in 0..g.values.len() {
            g.node(i, &mut x);
            var += x[0] * x[0] * g.values[i] * g.cell_volume;
        }
        assert!((var - 0.05).abs() < 1e-6, "{var}");
    }

    #[test]
    fn gibbs_residual_converges_at_second_order() {
        let m = quad(0.2);
        let r64 = fp_residual_report(&m, &gibbs_grid_density(&m, -2.0, 2.0, 64).unwrap()).unwrap();
        let r128 = fp_residual_report(&m, &gibbs_grid_density(&m, -2.0, 2.0, 128).unwrap()).unwrap();
        assert!(r128.mass_rate_norm <= 1e-3);
        assert!(r64.mass_rate_norm / r128.mass_rate_norm >= 2.0);
        assert!(r64.l2_norm / r128.l2_norm >= 3.5);
    }

    #[test]
    fn uniform_density_is_far_from_stationary() {
        let m = quad(0.2);
        let gibbs = fp_residual(&m, &gibbs_grid_density(&m, -2.0, 2.0, 128).unwrap()).unwrap();
        let mut u = GridDensity::from_fn(vec![-2.0; 2], vec![2.0; 2], 128, |_| 1.0).unwrap();
        u.normalize().unwrap();
        let uni = fp_residual(&m, &u).unwrap();
        assert!(uni > 10.0 * gibbs);
        // interior value is exactly ∇·(p·2x) = 4p
        let op = fp_operator(|x, g| m.potential.gradient_into(x, g), 0.2, &u).unwrap();
        assert!(op.iter().all(|v| (v - 4.0 * u.values[0]).abs() < 1e-9));
    }

    #[test]
    fn operator_is_linear_in_the_model_pair() {
        let a = PolynomialPotential::new(2, 4, [(MultiIndex::new(vec![4, 0]), 0.3), (MultiIndex::new(vec![1, 1]), -1.0)]).unwrap();
        let b = PolynomialPotential::new(2, 4, [(MultiIndex::new(vec![0, 2]), 2.0), (MultiIndex::new(vec![1, 1]), 0.5)]).unwrap();
        let diff = a.sub(&b).unwrap();
        let m = quad(0.4);
        let dens = gibbs_grid_density(&m, -2.0, 2.0, 40).unwrap();
        let la = fp_operator(|x, g| a.gradient_into_unchecked(x, g), 0.7, &dens).unwrap();
        let lb = fp_operator(|x, g| b.gradient_into_unchecked(x, g), 0.3, &dens).unwrap();
        let ld = fp_operator(|x, g| diff.gradient_into_unchecked(x, g), 0.7 - 0.3, &dens).unwrap();
        for ((x, y), z) in la.iter().zip(&lb).zip(&ld) {
            assert!((x - y - z).abs() <= 1e-10 * (x.abs() + y.abs() + 1.0));
        }
    }

    #[test]
    fn rejects_coarse_grids() {
        let m = quad(0.2);
        let g = gibbs_grid_density(&m, -2.0, 2.0, 8).unwrap();
        assert!(fp_residual(&m, &g).is_err());
    }
}
