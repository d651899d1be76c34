use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::multi_index::{graded_lex, MultiIndex};
use crate::error::{check_dim, Error, Result};

/// `Ψ(x) = Σ_{|α| ≤ k} θ_α x^α`, stored sparsely in graded-lex order with no
/// zero coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialPotential {
    dim: usize,
    degree: u32,
    terms: Vec<(MultiIndex, f64)>,
}

/// One `{"alpha": [...], "value": ...}` entry of the JSON form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub alpha: MultiIndex,
    pub value: f64,
}

impl PolynomialPotential {
    pub fn new(
        dim: usize,
        degree: u32,
        terms: impl IntoIterator<Item = (MultiIndex, f64)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("polynomial dimension must be positive"));
        }
        let mut map: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (alpha, value) in terms {
            check_dim(dim, alpha.dim())?;
            if alpha.degree() > degree {
                return Err(Error::invalid(format!(
                    "multi-index {alpha} exceeds degree {degree}"
                )));
            }
            if !value.is_finite() {
                return Err(Error::invalid(format!("coefficient of {alpha} is not finite")));
            }
            *map.entry(alpha).or_insert(0.0) += value;
        }
        let terms = map.into_iter().filter(|(_, v)| *v != 0.0).collect();
        Ok(PolynomialPotential { dim, degree, terms })
    }

    /// Builds a polynomial from coefficients laid out in basis order
    /// (all `α` with `1 ≤ |α| ≤ k`, graded-lex).
    pub fn from_basis_coefficients(dim: usize, degree: u32, coeffs: &[f64]) -> Result<Self> {
        let basis = graded_lex(dim, 1, degree);
        if coeffs.len() != basis.len() {
            return Err(Error::invalid(format!(
                "expected {} coefficients for d={dim}, k={degree}, got {}",
                basis.len(),
                coeffs.len()
            )));
        }
        Self::new(dim, degree, basis.into_iter().zip(coeffs.iter().copied()))
    }

    pub fn zero(dim: usize, degree: u32) -> Self {
        PolynomialPotential {
            dim,
            degree,
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> &[(MultiIndex, f64)] {
        &self.terms
    }

    pub fn coefficient(&self, alpha: &MultiIndex) -> f64 {
        self.terms
            .binary_search_by(|(a, _)| a.cmp(alpha))
            .map(|i| self.terms[i].1)
            .unwrap_or(0.0)
    }

    /// Coefficients in basis order (constant term excluded).
    pub fn basis_coefficients(&self) -> Vec<f64> {
        graded_lex(self.dim, 1, self.degree)
            .iter()
            .map(|a| self.coefficient(a))
            .collect()
    }

    pub fn value_unchecked(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(a, c)| c * a.monomial(x)).sum()
    }

    pub fn gradient_into_unchecked(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut g = vec![0.0; self.dim];
        for (a, c) in &self.terms {
            a.gradient_into(x, &mut g);
            for (o, gi) in out.iter_mut().zip(&g) {
                *o += c * gi;
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let terms = if factor == 0.0 {
            Vec::new()
        } else {
            self.terms.iter().map(|(a, c)| (a.clone(), c * factor)).collect()
        };
        PolynomialPotential {
            dim: self.dim,
            degree: self.degree,
            terms,
        }
    }

    /// Coefficient-wise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        Self::new(
            self.dim,
            self.degree.max(other.degree),
            self.terms.iter().chain(&other.terms).cloned(),
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    pub(crate) fn to_terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(alpha, value)| Term {
                alpha: alpha.clone(),
                value: *value,
            })
            .collect()
    }
}
