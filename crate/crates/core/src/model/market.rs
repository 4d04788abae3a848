use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Market and preference-environment constants.
///
/// `gamma_growth` and `m_growth` are the exponent and constant of the growth
/// bound `f(c, x) <= M (1 + c^gamma + x^gamma)`; the same exponent enters the
/// finiteness condition on the discount rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub mu: f64,
    pub r: f64,
    pub sigma: f64,
    pub delta: f64,
    pub gamma_growth: f64,
    pub m_growth: f64,
}

impl MarketParams {
    /// Checks the structural invariants (not well-posedness, which is reported
    /// separately so that validation can describe it).
    pub fn check(&self) -> Result<()> {
        let all = [
            self.mu,
            self.r,
            self.sigma,
            self.delta,
            self.gamma_growth,
            self.m_growth,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "market parameters must be finite".into(),
            ));
        }
        if self.r < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "r = {} must be >= 0",
                self.r
            )));
        }
        if self.mu <= self.r {
            return Err(Error::InvalidParameter(format!(
                "mu = {} must exceed r = {}",
                self.mu, self.r
            )));
        }
        if self.sigma <= 0.0 || self.delta <= 0.0 || self.m_growth <= 0.0 {
            return Err(Error::InvalidParameter(
                "sigma, delta and m_growth must be positive".into(),
            ));
        }
        if !(self.gamma_growth > 0.0 && self.gamma_growth < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma_growth = {} must lie in (0, 1)",
                self.gamma_growth
            )));
        }
        Ok(())
    }

    /// Sharpe-ratio constant `(mu - r)^2 / (2 sigma^2)`.
    pub fn theta(&self) -> f64 {
        let ex = self.mu - self.r;
        ex * ex / (2.0 * self.sigma * self.sigma)
    }

    pub fn excess_return(&self) -> f64 {
        self.mu - self.r
    }

    /// Right-hand side of the finiteness condition
    /// `delta > r gamma + gamma (mu - r)^2 / (2 sigma^2 (1 - gamma))`.
    pub fn well_posedness_bound(&self) -> f64 {
        let g = self.gamma_growth;
        self.r * g + g * self.theta() / (1.0 - g)
    }

    pub fn is_well_posed(&self) -> bool {
        self.delta > self.well_posedness_bound()
    }

    pub fn require_well_posed(&self) -> Result<()> {
        self.check()?;
        if self.is_well_posed() {
            Ok(())
        } else {
            Err(Error::IllPosed {
                delta: self.delta,
                bound: self.well_posedness_bound(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> MarketParams {
        MarketParams {
            mu: 0.07,
            r: 0.0,
            sigma: 0.2,
            delta: 0.1,
            gamma_growth: 0.5,
            m_growth: 2.0,
        }
    }

    #[test]
    fn well_posedness_holds_for_reference_market() {
        let m = base();
        assert!((m.well_posedness_bound() - 0.06125).abs() < 1e-15);
        assert!(m.is_well_posed());
    }

    #[test]
    fn boundary_delta_is_rejected() {
        let mut m = base();
        m.delta = m.well_posedness_bound();
        assert!(!m.is_well_posed());
        assert!(matches!(
            m.require_well_posed(),
            Err(Error::IllPosed { .. })
        ));
    }

    #[test]
    fn invariants() {
        let mut m = base();
        m.mu = 0.0;
        assert!(m.check().is_err());
        let mut m = base();
        m.r = -0.01;
        assert!(m.check().is_err());
        let mut m = base();
        m.gamma_growth = 1.0;
        assert!(m.check().is_err());
        assert!(base().check().is_ok());
    }
}
