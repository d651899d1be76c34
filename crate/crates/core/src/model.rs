use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::Potential;

/// `dX_t = −∇Ψ(X_t) dt + σ dW_t`, parameterized by the potential and the
/// diffusivity `σ²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LangevinModel {
    pub potential: Potential,
    pub sigma2: f64,
}

impl LangevinModel {
    /// Requires `σ² > 0`.
    pub fn new(potential: Potential, sigma2: f64) -> Result<Self> {
        let m = LangevinModel { potential, sigma2 };
        m.validate()?;
        Ok(m)
    }

    /// Noise-free gradient flow. Only meaningful for simulation.
    pub fn noiseless(potential: Potential) -> Self {
        LangevinModel {
            potential,
            sigma2: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "diffusivity must be positive and finite, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    pub(crate) fn validate_for_simulation(&self) -> Result<()> {
        self.potential.validate()?;
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::invalid("diffusivity must be non-negative and finite"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_diffusivity() {
        assert!(LangevinModel::new(Potential::quadratic(2), 0.0).is_err());
        assert!(LangevinModel::new(Potential::quadratic(2), -1.0).is_err());
        assert!(LangevinModel::new(Potential::quadratic(2), 0.2).is_ok());
        assert!(LangevinModel::noiseless(Potential::quadratic(2))
            .validate_for_simulation()
            .is_ok());
    }
}
