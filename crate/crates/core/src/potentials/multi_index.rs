//! Multi-indices and the monomial gradient basis.
//!
//! Multi-indices are ordered graded-lexicographically: first by total degree,
//! then by exponent vectors compared lexicographically with larger leading
//! exponents first. For `d = 2` this gives
//! `(1,0) (0,1) (2,0) (1,1) (0,2) (3,0) ...`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Exponent vector `α = (α₁, …, α_d)` of the monomial `x^α`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total degree `|α|`.
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `x^α`, with the convention `x⁰ ≡ 1` (also at `x = 0`).
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&a, &xi)| if a == 0 { 1.0 } else { xi.powi(a as i32) })
            .product()
    }

    /// Writes `∇x^α` into `out`: `(∇x^α)ᵢ = αᵢ x^{α−eᵢ}`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let ai = self.0[i];
            if ai == 0 {
                *o = 0.0;
                continue;
            }
            let mut v = ai as f64;
            for (j, (&aj, &xj)) in self.0.iter().zip(x).enumerate() {
                let e = if j == i { aj - 1 } else { aj };
                if e > 0 {
                    v *= xj.powi(e as i32);
                }
            }
            *o = v;
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.0.len()];
        self.gradient_into(x, &mut out);
        out
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

fn push_compositions(d: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if prefix.len() == d - 1 {
        prefix.push(total);
        out.push(MultiIndex(prefix.clone()));
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_compositions(d, total - first, prefix, out);
        prefix.pop();
    }
}

/// All multi-indices of dimension `d` with `min_degree ≤ |α| ≤ max_degree`,
/// in graded-lexicographic order.
pub fn graded_lex(d: usize, min_degree: u32, max_degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    if d == 0 {
        return out;
    }
    let mut prefix = Vec::with_capacity(d);
    for deg in min_degree..=max_degree {
        push_compositions(d, deg, &mut prefix, &mut out);
    }
    out
}

/// The gradients `∇x^α` for every `α` with `1 ≤ |α| ≤ k`, in graded-lex
/// order. The constant monomial is excluded since it does not move `∇Ψ`.
pub fn gradient_basis(x: &[f64], d: usize, k: u32) -> Vec<Vec<f64>> {
    graded_lex(d, 1, k).iter().map(|a| a.gradient(x)).collect()
}

/// Precomputed monomial basis used in the estimation loops.
///
/// `eval_into` writes the `p × d` row-major matrix whose row `a` is `∇x^{α_a}`.
#[derive(Clone, Debug)]
pub struct GradientBasis {
    d: usize,
    k: u32,
    indices: Vec<MultiIndex>,
}

impl GradientBasis {
    pub fn new(d: usize, k: u32) -> Self {
        GradientBasis {
            d,
            k,
            indices: graded_lex(d, 1, k),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Evaluates all basis gradients at `x` into `out` (`len() * dim()` entries).
    /// `powers` is scratch space of length `dim() * (k + 1)`.
    pub fn eval_into(&self, x: &[f64], powers: &mut [f64], out: &mut [f64]) {
        let d = self.d;
        let stride = self.k as usize + 1;
        for i in 0..d {
            let row = &mut powers[i * stride..(i + 1) * stride];
            row[0] = 1.0;
            for e in 1..stride {
                row[e] = row[e - 1] * x[i];
            }
        }
        for (a, alpha) in self.indices.iter().enumerate() {
            let ex = alpha.exponents();
            for i in 0..d {
                let ai = ex[i] as usize;
                let v = if ai == 0 {
                    0.0
                } else {
                    let mut v = ai as f64 * powers[i * stride + ai - 1];
                    for j in 0..d {
                        if j != i {
                            v *= powers[j * stride + ex[j] as usize];
                        }
                    }
                    v
                };
                out[a * d + i] = v;
            }
        }
    }

    pub fn scratch(&self) -> (Vec<f64>, Vec<f64>) {
        (
            vec![0.0; self.d * (self.k as usize + 1)],
            vec![0.0; self.len() * self.d],
        )
    }
}
