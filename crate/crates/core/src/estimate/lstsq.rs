//! Weighted least squares for the linearized Gaussian transition
//! `y | x ~ N(x − Δt ∇Ψ_θ(x), σ²Δt I)` with `∇Ψ_θ` linear in `θ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::potentials::GradientBasis;

/// Relative eigenvalue cutoff for the Jacobi-scaled Gram matrix.
const RANK_TOL: f64 = 1e-10;

/// Normal equations `G θ = h` with `G = Σ r Δt BᵀB`, `h = −Σ Bᵀ(ȳ − r x)`,
/// where each source point `x` has total outgoing weight `r` and weighted
/// destination sum `ȳ`.
pub(crate) struct NormalEquations<'a> {
    basis: &'a GradientBasis,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    powers: Vec<f64>,
    b: Vec<f64>,
    disp: Vec<f64>,
}

pub(crate) struct DriftSolution {
    pub theta: Vec<f64>,
    /// Dimension of the numerical null space of the design.
    pub null_dim: usize,
}

impl<'a> NormalEquations<'a> {
    pub fn new(basis: &'a GradientBasis) -> Self {
        let p = basis.len();
        let (powers, b) = basis.scratch();
        NormalEquations {
            basis,
            gram: vec![0.0; p * p],
            rhs: vec![0.0; p],
            powers,
            b,
            disp: vec![0.0; basis.dim()],
        }
    }

    /// Adds one source point. `ybar` is `Σ_j w_j y_j` over its destinations.
    pub fn add(&mut self, x: &[f64], r: f64, ybar: &[f64], dt: f64) {
        if r == 0.0 {
            return;
        }
        let d = self.basis.dim();
        let p = self.basis.len();
        self.basis.eval_into(x, &mut self.powers, &mut self.b);
        for i in 0..d {
            self.disp[i] = ybar[i] - r * x[i];
        }
        let b = &self.b;
        for a in 0..p {
            let ba = &b[a * d..(a + 1) * d];
            let mut h = 0.0;
            for i in 0..d {
                h += ba[i] * self.disp[i];
            }
            self.rhs[a] -= h;
            for c in a..p {
                let bc = &b[c * d..(c + 1) * d];
                let mut g = 0.0;
                for i in 0..d {
                    g += ba[i] * bc[i];
                }
                self.gram[a * p + c] += r * dt * g;
            }
        }
    }

    /// Least-norm solution via a Jacobi-scaled symmetric eigendecomposition.
    pub fn solve(&self) -> Result<DriftSolution> {
        let p = self.basis.len();
        let g = DMatrix::from_fn(p, p, |i, j| {
            if i <= j {
                self.gram[i * p + j]
            } else {
                self.gram[j * p + i]
            }
        });
        if g.iter().any(|v| !v.is_finite()) || self.rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite normal equations".into()));
        }
        let scale: Vec<f64> = (0..p)
            .map(|i| {
                let v = g[(i, i)];
                if v > 0.0 {
                    1.0 / v.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let s = DMatrix::from_fn(p, p, |i, j| g[(i, j)] * scale[i] * scale[j]);
        let hs = DVector::from_fn(p, |i, _| self.rhs[i] * scale[i]);
        let eig = SymmetricEigen::new(s);
        let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
        let cutoff = RANK_TOL * top;
        let mut z = DVector::zeros(p);
        let mut null_dim = 0;
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if top > 0.0 && lambda > cutoff {
                let v = eig.eigenvectors.column(k);
                z += v * (v.dot(&hs) / lambda);
            } else {
                null_dim += 1;
            }
        }
        Ok(DriftSolution {
            theta: (0..p).map(|i| z[i] * scale[i]).collect(),
            null_dim,
        })
    }
}

/// Gradient of the fitted polynomial drift at `x`, from basis coefficients.
pub(crate) struct DriftEvaluator<'a> {
    basis: &'a GradientBasis,
    theta: &'a [f64],
    powers: Vec<f64>,
    b: Vec<f64>,
}

impl<'a> DriftEvaluator<'a> {
    pub fn new(basis: &'a GradientBasis, theta: &'a [f64]) -> Self {
        let (powers, b) = basis.scratch();
        DriftEvaluator { basis, theta, powers, b }
    }

    /// Writes the linearized mean `x − Δt ∇Ψ_θ(x)` into `out`.
    pub fn mean_into(&mut self, x: &[f64], dt: f64, out: &mut [f64]) {
        let d = self.basis.dim();
        self.basis.eval_into(x, &mut self.powers, &mut self.b);
        out.copy_from_slice(x);
        for (a, th) in self.theta.iter().enumerate() {
            if *th != 0.0 {
                for i in 0..d {
                    out[i] -= dt * th * self.b[a * d + i];
                }
            }
        }
    }
}
