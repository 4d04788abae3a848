//! Closed-form Merton solution for CRRA consumption utility without a
//! borrowing cap, used as an oracle for the numerical modules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MarketParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MertonSolution {
    /// Consumption propensity: `c*(x) = a x`.
    pub a: f64,
    /// `V(x) = value_coeff x^{1-R} / (1-R)`.
    pub value_coeff: f64,
    /// Risky proportion `(mu - r) / (sigma^2 R)`.
    pub pi_prop: f64,
    pub risk_aversion: f64,
}

impl MertonSolution {
    pub fn new(market: &MarketParams, risk_aversion: f64) -> Result<Self> {
        market.check()?;
        let rr = risk_aversion;
        if !(rr > 0.0 && rr < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "risk aversion {rr} must lie in (0, 1)"
            )));
        }
        let theta = market.theta();
        let a = (market.delta - (1.0 - rr) * (market.r + theta / rr)) / rr;
        if !(a > 0.0) {
            return Err(Error::IllPosed {
                delta: market.delta,
                bound: (1.0 - rr) * (market.r + theta / rr),
            });
        }
        Ok(MertonSolution {
            a,
            value_coeff: a.powf(-rr),
            pi_prop: market.excess_return() / (market.sigma * market.sigma * rr),
            risk_aversion: rr,
        })
    }

    pub fn value(&self, x: f64) -> f64 {
        let q = 1.0 - self.risk_aversion;
        self.value_coeff * x.powf(q) / q
    }

    pub fn dv(&self, x: f64) -> f64 {
        self.value_coeff * x.powf(-self.risk_aversion)
    }

    pub fn d2v(&self, x: f64) -> f64 {
        -self.risk_aversion * self.value_coeff * x.powf(-self.risk_aversion - 1.0)
    }

    pub fn consumption(&self, x: f64) -> f64 {
        self.a * x
    }

    pub fn risky_amount(&self, x: f64) -> f64 {
        self.pi_prop * x
    }

    /// Dual value `v(y) = sup_x V(x) - x y` with `v'` and `v''`.
    pub fn dual(&self, y: f64) -> (f64, f64, f64) {
        let rr = self.risk_aversion;
        let x = (y / self.value_coeff).powf(-1.0 / rr);
        let v = self.value(x) - x * y;
        (v, -x, -1.0 / self.d2v(x))
    }

    /// Residual of the unconstrained equation
    /// `delta V = -theta V'^2 / V'' + p(V') + r x V'` at `x`, with the
    /// consumption dual `p(z) = R/(1-R) z^{(R-1)/R}` written out independently.
    pub fn ode_residual(&self, market: &MarketParams, x: f64) -> f64 {
        let rr = self.risk_aversion;
        let (v, d1, d2) = (self.value(x), self.dv(x), self.d2v(x));
        let p = rr / (1.0 - rr) * d1.powf((rr - 1.0) / rr);
        market.delta * v - (-market.theta() * d1 * d1 / d2 + p + market.r * x * d1)
    }
}

pub fn merton_value(market: &MarketParams, risk_aversion: f64, x: f64) -> Result<f64> {
    Ok(MertonSolution::new(market, risk_aversion)?.value(x))
}

/// `(A, pi_prop)`: consumption propensity and risky proportion.
pub fn merton_policy(market: &MarketParams, risk_aversion: f64) -> Result<(f64, f64)> {
    let m = MertonSolution::new(market, risk_aversion)?;
    Ok((m.a, m.pi_prop))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market() -> MarketParams {
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
    fn admission_residual_vanishes() {
        for m in [
            market(),
            MarketParams {
                r: 0.02,
                mu: 0.06,
                ..market()
            },
        ] {
            let s = MertonSolution::new(&m, 0.5).unwrap();
            for k in 0..1000 {
                let x = 10f64.powf(-3.0 + 6.0 * k as f64 / 999.0);
                let res = s.ode_residual(&m, x);
                assert!(res.abs() <= 1e-10 * s.value(x).max(1.0), "x = {x}: {res}");
            }
        }
    }

    #[test]
    fn test_market_constants() {
        let s = MertonSolution::new(&market(), 0.5).unwrap();
        assert!((s.a - 0.0775).abs() < 1e-15);
        assert!((s.pi_prop - 3.5).abs() < 1e-12);
        assert!((s.value(1.0) - 2.0 / 0.0775f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn outside_finiteness_regime() {
        let m = MarketParams {
            delta: 0.06,
            ..market()
        };
        assert!(MertonSolution::new(&m, 0.5).is_err());
    }

    #[test]
    fn dual_is_legendre_transform() {
        let s = MertonSolution::new(&market(), 0.5).unwrap();
        let y = 0.8;
        let (v, dv, _) = s.dual(y);
        // brute-force sup over x on a fine log grid
        let best = (0..200_000)
            .map(|k| 10f64.powf(-3.0 + 6.0 * k as f64 / 199_999.0))
            .map(|x| s.value(x) - x * y)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((v - best).abs() < 1e-7);
        assert!((s.dv(-dv) - y).abs() < 1e-12);
    }
}
