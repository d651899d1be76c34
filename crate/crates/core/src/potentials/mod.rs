//! Drift potentials `Ψ`: sparse polynomials and the named benchmark
//! landscapes, with analytic gradients and growth checks.

mod multi_index;
mod named;
mod polynomial;

pub use multi_index::{gradient_basis, graded_lex, GradientBasis, MultiIndex};
pub use named::{NamedKind, NamedPotential, DEFAULT_CLIP_RADIUS};
pub use polynomial::{PolynomialPotential, Term};

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::rng;

/// A drift potential.
#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    Polynomial(PolynomialPotential),
    Named(NamedPotential),
}

impl Potential {
    pub fn named(kind: NamedKind) -> Self {
        Potential::Named(NamedPotential::new(kind))
    }

    pub fn quadratic(dim: usize) -> Self {
        Potential::Named(NamedPotential::new(NamedKind::Quadratic).with_dim(dim))
    }

    pub fn dim(&self) -> usize {
        match self {
            Potential::Polynomial(p) => p.dim(),
            Potential::Named(n) => n.dim,
        }
    }

    /// `Ψ(x)`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.value_unchecked(x))
    }

    /// `∇Ψ(x)`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = vec![0.0; x.len()];
        self.gradient_into(x, &mut out);
        Ok(out)
    }

    pub fn value_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Polynomial(p) => p.value_unchecked(x),
            Potential::Named(n) => n.value_unchecked(x),
        }
    }

    /// Writes `∇Ψ(x)` into `out` without checking lengths.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Potential::Polynomial(p) => p.gradient_into_unchecked(x, out),
            Potential::Named(n) => n.gradient_into_unchecked(x, out),
        }
    }

    /// `α Ψ`.
    pub fn scaled(&self, alpha: f64) -> Self {
        match self {
            Potential::Polynomial(p) => Potential::Polynomial(p.scaled(alpha)),
            Potential::Named(n) => {
                let mut n = n.clone();
                n.scale *= alpha;
                Potential::Named(n)
            }
        }
    }

    /// Polynomial representation when one exists.
    pub fn as_polynomial(&self) -> Option<PolynomialPotential> {
        match self {
            Potential::Polynomial(p) => Some(p.clone()),
            Potential::Named(n) => n.as_polynomial(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Polynomial(_) => Ok(()),
            Potential::Named(n) => {
                if !(n.clip_radius > 0.0 && n.clip_radius.is_finite()) {
                    return Err(Error::invalid("clip_radius must be positive"));
                }
                if n.dim == 0 {
                    return Err(Error::invalid("dimension must be positive"));
                }
                if n.kind == NamedKind::Bohachevsky && n.dim != 2 {
                    return Err(Error::DimensionMismatch {
                        expected: 2,
                        got: n.dim,
                    });
                }
                if !n.scale.is_finite() {
                    return Err(Error::invalid("scale must be finite"));
                }
                Ok(())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Potential::Polynomial(p) => format!("polynomial_d{}_k{}", p.dim(), p.degree()),
            Potential::Named(n) => n.kind.name().to_string(),
        }
    }
}

impl From<PolynomialPotential> for Potential {
    fn from(p: PolynomialPotential) -> Self {
        Potential::Polynomial(p)
    }
}

impl From<NamedPotential> for Potential {
    fn from(n: NamedPotential) -> Self {
        Potential::Named(n)
    }
}

fn default_clip() -> f64 {
    DEFAULT_CLIP_RADIUS
}
fn default_dim() -> usize {
    2
}
fn default_scale() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
struct NamedFields {
    #[serde(default = "default_clip")]
    clip_radius: f64,
    #[serde(default = "default_dim")]
    d: usize,
    #[serde(default = "default_scale")]
    scale: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PotentialRepr {
    Polynomial { d: usize, k: u32, coeffs: Vec<Term> },
    Quadratic(NamedFields),
    StyblinskiTang(NamedFields),
    Bohachevsky(NamedFields),
    WavyPlateau(NamedFields),
    OakleyOhagan(NamedFields),
}

impl Serialize for Potential {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            Potential::Polynomial(p) => PotentialRepr::Polynomial {
                d: p.dim(),
                k: p.degree(),
                coeffs: p.to_terms(),
            },
            Potential::Named(n) => {
                let f = NamedFields {
                    clip_radius: n.clip_radius,
                    d: n.dim,
                    scale: n.scale,
                };
                match n.kind {
                    NamedKind::Quadratic => PotentialRepr::Quadratic(f),
                    NamedKind::StyblinskiTang => PotentialRepr::StyblinskiTang(f),
                    NamedKind::Bohachevsky => PotentialRepr::Bohachevsky(f),
                    NamedKind::WavyPlateau => PotentialRepr::WavyPlateau(f),
                    NamedKind::OakleyOhagan => PotentialRepr::OakleyOhagan(f),
                }
            }
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Potential {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let named = |kind, f: NamedFields| NamedPotential {
            kind,
            clip_radius: f.clip_radius,
            dim: f.d,
            scale: f.scale,
        };
        let p = match PotentialRepr::deserialize(d)? {
            PotentialRepr::Polynomial { d, k, coeffs } => Potential::Polynomial(
                PolynomialPotential::new(d, k, coeffs.into_iter().map(|t| (t.alpha, t.value)))
                    .map_err(D::Error::custom)?,
            ),
            PotentialRepr::Quadratic(f) => Potential::Named(named(NamedKind::Quadratic, f)),
            PotentialRepr::StyblinskiTang(f) => {
                Potential::Named(named(NamedKind::StyblinskiTang, f))
            }
            PotentialRepr::Bohachevsky(f) => Potential::Named(named(NamedKind::Bohachevsky, f)),
            PotentialRepr::WavyPlateau(f) => Potential::Named(named(NamedKind::WavyPlateau, f)),
            PotentialRepr::OakleyOhagan(f) => Potential::Named(named(NamedKind::OakleyOhagan, f)),
        };
        p.validate().map_err(D::Error::custom)?;
        Ok(p)
    }
}

/// Smallest `K` with `‖∇Ψ(x)‖ ≤ K(1 + ‖x‖)` over `n` uniform samples of the
/// box `[−half_side, half_side]^d`.
pub fn linear_growth_constant(p: &Potential, half_side: f64, n: usize, seed: u64) -> f64 {
    let d = p.dim();
    let mut r = rng::stream(seed, 0);
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut k = 0.0f64;
    for _ in 0..n {
        for xi in x.iter_mut() {
            *xi = r.random_range(-half_side..=half_side);
        }
        p.gradient_into(&x, &mut g);
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        k = k.max(gn / (1.0 + xn));
    }
    k
}

/// Empirical Lipschitz constant of `∇Ψ` over `n` random pairs in the box.
pub fn lipschitz_estimate(p: &Potential, half_side: f64, n: usize, seed: u64) -> f64 {
    let d = p.dim();
    let mut r = rng::stream(seed, 1);
    let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
    let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
    let mut l = 0.0f64;
    for _ in 0..n {
        for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
            *xi = r.random_range(-half_side..=half_side);
            *yi = *xi + 0.05 * half_side * r.random_range(-1.0..=1.0);
        }
        p.gradient_into(&x, &mut gx);
        p.gradient_into(&y, &mut gy);
        let num = gx
            .iter()
            .zip(&gy)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if den > 0.0 {
            l = l.max(num / den);
        }
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient(p: &Potential, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (p.value_unchecked(&a) - p.value_unchecked(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn named_examples() {
        let q = Potential::named(NamedKind::Quadratic);
        assert_eq!(q.value(&[1.0, 2.0]).unwrap(), 5.0);
        assert_eq!(q.gradient(&[1.0, 2.0]).unwrap(), vec![2.0, 4.0]);
        let st = Potential::named(NamedKind::StyblinskiTang);
        assert_eq!(st.value(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(st.gradient(&[0.0, 0.0]).unwrap(), vec![2.5, 2.5]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let q = Potential::named(NamedKind::Quadratic);
        assert!(matches!(
            q.value(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(q.gradient(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn named_gradients_match_finite_differences() {
        let x = [0.37, -1.21];
        for kind in NamedKind::ALL {
            let p = Potential::named(kind);
            let g = p.gradient(&x).unwrap();
            let fd = fd_gradient(&p, &x, 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{kind:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn clipped_extension_is_continuous() {
        for kind in NamedKind::ALL {
            let p = NamedPotential::new(kind).with_clip_radius(3.0);
            let inside = [3.0 - 1e-12, 1.3];
            let outside = [3.0 + 1e-12, 1.3];
            let mut gi = [0.0; 2];
            let mut go = [0.0; 2];
            p.gradient_into_unchecked(&inside, &mut gi);
            p.gradient_into_unchecked(&outside, &mut go);
            for (a, b) in gi.iter().zip(&go) {
                assert!((a - b).abs() <= 1e-8, "{kind:?}");
            }
            let vi = p.value_unchecked(&inside);
            let vo = p.value_unchecked(&outside);
            assert!((vi - vo).abs() <= 1e-8);
        }
    }

    #[test]
    fn quadratic_extension_is_exact() {
        let p = Potential::Named(NamedPotential::new(NamedKind::Quadratic).with_clip_radius(1.0));
        let x = [3.0, -2.0];
        assert!((p.value_unchecked(&x) - 13.0).abs() < 1e-12);
        assert_eq!(p.gradient(&x).unwrap(), vec![6.0, -4.0]);
    }

    #[test]
    fn growth_constant_is_finite_for_clipped_potentials() {
        for kind in NamedKind::ALL {
            let p = Potential::named(kind);
            let k = linear_growth_constant(&p, 2.0 * DEFAULT_CLIP_RADIUS, 5000, 3);
            assert!(k.is_finite() && k > 0.0);
            // Beyond the clip box the ratio cannot keep growing.
            let k_far = linear_growth_constant(&p, 20.0 * DEFAULT_CLIP_RADIUS, 5000, 4);
            assert!(k_far <= 1.5 * k, "{kind:?}: {k_far} > {k}");
        }
        let q = Potential::named(NamedKind::Quadratic);
        assert!(lipschitz_estimate(&q, 5.0, 1000, 1) <= 2.0 + 1e-9);
    }

    #[test]
    fn json_forms() {
        let p: Potential = serde_json::from_str(
            r#"{"kind":"polynomial","d":2,"k":4,"coeffs":[{"alpha":[2,0],"value":1.0},{"alpha":[0,2],"value":1.0}]}"#,
        )
        .unwrap();
        assert_eq!(p.value(&[3.0, 4.0]).unwrap(), 25.0);
        let st: Potential =
            serde_json::from_str(r#"{"kind":"styblinski_tang","clip_radius":10.0}"#).unwrap();
        assert_eq!(st, Potential::named(NamedKind::StyblinskiTang));
        let back: Potential = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<Potential>(r#"{"kind":"bohachevsky","d":3}"#).is_err());
    }

    #[test]
    fn polynomial_forms_of_named_potentials_agree() {
        let x = [1.7, -0.4];
        for kind in [NamedKind::Quadratic, NamedKind::StyblinskiTang] {
            let n = Potential::named(kind);
            let p = Potential::Polynomial(n.as_polynomial().unwrap());
            assert!((n.value_unchecked(&x) - p.value_unchecked(&x)).abs() < 1e-12);
        }
    }
}
