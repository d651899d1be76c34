use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::multi_index::MultiIndex;
use super::polynomial::PolynomialPotential;

pub const DEFAULT_CLIP_RADIUS: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedKind {
    Quadratic,
    StyblinskiTang,
    Bohachevsky,
    WavyPlateau,
    OakleyOhagan,
}

impl NamedKind {
    pub const ALL: [NamedKind; 5] = [
        NamedKind::Quadratic,
        NamedKind::StyblinskiTang,
        NamedKind::Bohachevsky,
        NamedKind::WavyPlateau,
        NamedKind::OakleyOhagan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NamedKind::Quadratic => "quadratic",
            NamedKind::StyblinskiTang => "styblinski_tang",
            NamedKind::Bohachevsky => "bohachevsky",
            NamedKind::WavyPlateau => "wavy_plateau",
            NamedKind::OakleyOhagan => "oakley_ohagan",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// One of the benchmark potentials, optionally multiplied by `scale`.
///
/// Inside the box `‖x‖∞ ≤ clip_radius` the closed forms are evaluated exactly.
/// Outside, with `λ = ‖x‖∞ / clip_radius` and `x_b = x / λ` on the box
/// boundary, the gradient is `λ ∇Ψ(x_b)` and the potential is
/// `Ψ(x_b) + (λ² − 1)/2 · ∇Ψ(x_b)·x_b` (the integral of the extended
/// gradient along the ray). The extension is continuous and grows linearly.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedPotential {
    pub kind: NamedKind,
    pub clip_radius: f64,
    pub dim: usize,
    pub scale: f64,
}

impl NamedPotential {
    pub fn new(kind: NamedKind) -> Self {
        NamedPotential {
            kind,
            clip_radius: DEFAULT_CLIP_RADIUS,
            dim: 2,
            scale: 1.0,
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    pub fn with_clip_radius(mut self, r: f64) -> Self {
        self.clip_radius = r;
        self
    }

    fn raw_value(&self, x: &[f64]) -> f64 {
        match self.kind {
            NamedKind::Quadratic => x.iter().map(|v| v * v).sum(),
            NamedKind::StyblinskiTang => {
                0.5 * x
                    .iter()
                    .map(|&v| v.powi(4) - 16.0 * v * v + 5.0 * v)
                    .sum::<f64>()
            }
            NamedKind::Bohachevsky => {
                10.0 * (x[0] * x[0] + 2.0 * x[1] * x[1]
                    - 0.3 * (3.0 * PI * x[0]).cos()
                    - 0.4 * (4.0 * PI * x[1]).cos())
            }
            NamedKind::WavyPlateau => x
                .iter()
                .map(|&v| (PI * v).cos() + 0.5 * v.powi(4) - 3.0 * v * v + 1.0)
                .sum(),
            NamedKind::OakleyOhagan => {
                5.0 * x
                    .iter()
                    .map(|&v| v.sin() + v.cos() + v * v + v)
                    .sum::<f64>()
            }
        }
    }

    fn raw_gradient(&self, x: &[f64], out: &mut [f64]) {
        match self.kind {
            NamedKind::Quadratic => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = 2.0 * v;
                }
            }
            NamedKind::StyblinskiTang => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = 0.5 * (4.0 * v * v * v - 32.0 * v + 5.0);
                }
            }
            NamedKind::Bohachevsky => {
                out[0] = 10.0 * (2.0 * x[0] + 0.9 * PI * (3.0 * PI * x[0]).sin());
                out[1] = 10.0 * (4.0 * x[1] + 1.6 * PI * (4.0 * PI * x[1]).sin());
            }
            NamedKind::WavyPlateau => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = -PI * (PI * v).sin() + 2.0 * v * v * v - 6.0 * v;
                }
            }
            NamedKind::OakleyOhagan => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = 5.0 * (v.cos() - v.sin() + 2.0 * v + 1.0);
                }
            }
        }
    }

    fn stretch(&self, x: &[f64]) -> f64 {
        let inf = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        inf / self.clip_radius
    }

    pub fn value_unchecked(&self, x: &[f64]) -> f64 {
        let lambda = self.stretch(x);
        let v = if lambda <= 1.0 {
            self.raw_value(x)
        } else {
            let xb: Vec<f64> = x.iter().map(|v| v / lambda).collect();
            let mut g = vec![0.0; x.len()];
            self.raw_gradient(&xb, &mut g);
            let radial: f64 = g.iter().zip(&xb).map(|(a, b)| a * b).sum();
            self.raw_value(&xb) + 0.5 * (lambda * lambda - 1.0) * radial
        };
        self.scale * v
    }

    pub fn gradient_into_unchecked(&self, x: &[f64], out: &mut [f64]) {
        let lambda = self.stretch(x);
        if lambda <= 1.0 {
            self.raw_gradient(x, out);
        } else {
            let xb: Vec<f64> = x.iter().map(|v| v / lambda).collect();
            self.raw_gradient(&xb, out);
            out.iter_mut().for_each(|o| *o *= lambda);
        }
        if self.scale != 1.0 {
            out.iter_mut().for_each(|o| *o *= self.scale);
        }
    }

    /// Polynomial form of the polynomial benchmarks (`Quadratic`,
    /// `StyblinskiTang`), valid inside the clip box.
    pub fn as_polynomial(&self) -> Option<PolynomialPotential> {
        let d = self.dim;
        let unit = |i: usize, e: u32| {
            let mut ex = vec![0; d];
            ex[i] = e;
            MultiIndex::new(ex)
        };
        let terms: Vec<(MultiIndex, f64)> = match self.kind {
            NamedKind::Quadratic => (0..d).map(|i| (unit(i, 2), self.scale)).collect(),
            NamedKind::StyblinskiTang => (0..d)
                .flat_map(|i| {
                    [
                        (unit(i, 4), 0.5 * self.scale),
                        (unit(i, 2), -8.0 * self.scale),
                        (unit(i, 1), 2.5 * self.scale),
                    ]
                })
                .collect(),
            _ => return None,
        };
        let degree = if self.kind == NamedKind::Quadratic { 2 } else { 4 };
        PolynomialPotential::new(d, degree, terms).ok()
    }
}
