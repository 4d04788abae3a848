//! Market parameters, preferences, the borrowing cap, and the
//! Legendre-Fenchel dual of the utility.

mod constraint;
mod market;
mod utility;
mod validate;

pub use constraint::{ConstraintSpec, CustomConstraint, ScalarFn};
pub use market::MarketParams;
pub use utility::{Callback, CustomUtility, DualValue, GrowthEnvelope, UtilityModel};
pub use validate::{validate, AssumptionCheck, CheckStatus, ProbeLattice, ValidationReport};

use crate::error::{Error, Result};

/// `p(x, zeta) = max_{c >= 0} f(c, x) - c zeta` with maximizer and partials.
pub fn dual_p(utility: &UtilityModel, x: f64, zeta: f64) -> Result<DualValue> {
    if !(x > 0.0 && zeta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dual needs x > 0 and zeta > 0 (x = {x}, zeta = {zeta})"
        )));
    }
    utility.dual(x, zeta)
}

/// Consumption `I(x, zeta)` at which marginal utility of consumption equals
/// `zeta`; zero for wealth-only preferences.
pub fn inverse_marginal(utility: &UtilityModel, x: f64, zeta: f64) -> Result<f64> {
    if !(x > 0.0 && zeta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "inverse marginal needs x > 0 and zeta > 0 (x = {x}, zeta = {zeta})"
        )));
    }
    utility.inverse_marginal(x, zeta)
}
