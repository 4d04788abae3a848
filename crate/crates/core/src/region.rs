//! Binding of the borrowing cap, the certification function `m(x)`, and the
//! free boundary `x*` between the unconstrained region `(0, x*)` and the
//! constrained region `(x*, inf)` for a constant cap `g = L`.
//!
//! Sign convention: with `V'' < 0`, the cap binds iff
//! `-(mu - r) V' / (sigma^2 V'') >= L`, i.e. iff
//! `Y(x) = (mu - r) V' + sigma^2 L V'' >= 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{merton_candidate, Region, ValueSolution};
use crate::model::{dual_p, ConstraintSpec, MarketParams, UtilityModel};
use crate::numerics::lagrange_derivs;

/// Dead-band for sign classification, relative to `max |m|`.
pub const SIGN_DEAD_BAND: f64 = 1e-8;

fn interior(solution: &ValueSolution, i: usize) -> Result<()> {
    if i == 0 || i + 1 >= solution.x().len() {
        return Err(Error::InvalidParameter(format!("node {i} is not interior")));
    }
    Ok(())
}

/// `Y(x) = (mu - r) V' + sigma^2 L V''` at node `i`.
pub fn compute_y(solution: &ValueSolution, market: &MarketParams, l: f64, i: usize) -> Result<f64> {
    interior(solution, i)?;
    Ok(market.excess_return() * solution.dv[i] + market.sigma * market.sigma * l * solution.d2v[i])
}

/// Whether the cap binds at interior node `i`.
pub fn binding_at(
    solution: &ValueSolution,
    market: &MarketParams,
    constraint: &ConstraintSpec,
    i: usize,
) -> Result<bool> {
    interior(solution, i)?;
    let (x, d1, d2) = (solution.x()[i], solution.dv[i], solution.d2v[i]);
    if !(d2 < 0.0) {
        return Err(Error::ConcavityLost {
            node: i,
            x,
            d2v: d2,
        });
    }
    Ok(merton_candidate(market, d1, d2) >= constraint.g(x))
}

/// `m(x) = -(mu - r) p_x - sigma^2 L [p_xx + 2 p_xzeta]
///        - p_zetazeta (mu - r)^2 V'^2 / (sigma^2 L) + r (mu - r) V'`
/// with the partials of the dual evaluated at `(x, V'(x))`.
pub fn compute_m(
    solution: &ValueSolution,
    utility: &UtilityModel,
    market: &MarketParams,
    l: f64,
    i: usize,
) -> Result<f64> {
    let (x, z) = (solution.x()[i], solution.dv[i]);
    m_at(utility, market, l, x, z)
}

fn m_at(utility: &UtilityModel, market: &MarketParams, l: f64, x: f64, z: f64) -> Result<f64> {
    let d = dual_p(utility, x, z)?;
    let ex = market.excess_return();
    let s2 = market.sigma * market.sigma;
    Ok(-ex * d.p_x
        - s2 * l * (d.p_xx + 2.0 * d.p_xzeta)
        - d.p_zetazeta * ex * ex * z * z / (s2 * l)
        + market.r * ex * z)
}

/// Bracketed factor `n(x)` of `m(x)` for the multiplicative preference
/// `(c^a x^b)^{1-R} / (1-R)`: `m = (p / x^2) n` with `p > 0`.
pub fn multiplicative_n(
    utility: &UtilityModel,
    market: &MarketParams,
    l: f64,
    solution: &ValueSolution,
    i: usize,
) -> Result<f64> {
    let UtilityModel::CobbDouglas {
        a,
        b,
        risk_aversion,
    } = *utility
    else {
        return Err(Error::WrongVariant {
            expected: "cobb_douglas",
        });
    };
    let q = 1.0 - risk_aversion;
    let alpha = a * q / (a * q - 1.0);
    let beta = b * q / (1.0 - a * q);
    let (x, z) = (solution.x()[i], solution.dv[i]);
    let ex = market.excess_return();
    let s2 = market.sigma * market.sigma;
    let mut n = -ex * beta * x
        - ex * ex / (s2 * l) * alpha * (alpha - 1.0) * x * x
        - s2 * l * (beta * (beta - 1.0) + 2.0 * beta * alpha * x / z);
    if market.r != 0.0 {
        let p = dual_p(utility, x, z)?.p;
        n += market.r * ex * z * x * x / p;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignPattern {
    NoChange,
    PositiveToNegative,
    NegativeToPositive,
    Multiple,
}

/// Sign pattern of samples, ignoring values within the dead-band, plus the
/// index pairs `(i, j)` bracketing each sign change.
pub fn classify_signs(values: &[f64]) -> (SignPattern, Vec<(usize, usize)>) {
    let scale = values.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    let band = SIGN_DEAD_BAND * scale;
    let mut last: Option<(usize, f64)> = None;
    let mut changes = Vec::new();
    let mut first_sign = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if v.abs() <= band {
            continue;
        }
        let s = v.signum();
        match last {
            None => first_sign = s,
            Some((j, prev)) if prev != s => changes.push((j, i)),
            _ => {}
        }
        last = Some((i, s));
    }
    let pattern = match changes.len() {
        0 => SignPattern::NoChange,
        1 if first_sign > 0.0 => SignPattern::PositiveToNegative,
        1 => SignPattern::NegativeToPositive,
        _ => SignPattern::Multiple,
    };
    (pattern, changes)
}

/// Jumps of `V`, `V'`, `V''` across `x*` between one-sided cubic fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothFit {
    pub dv_jump: f64,
    pub d2v_jump: f64,
    pub v_jump: f64,
    /// `|dV'| / |V'(x*)|`.
    pub rel_dv: f64,
    /// `|dV''| / |V''(x*)|`.
    pub rel_d2v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub xstar: Option<f64>,
    pub y_samples: Vec<f64>,
    pub m_samples: Vec<f64>,
    pub sign_pattern: SignPattern,
    /// Wealth levels (linear interpolation) where `m` changes sign.
    pub m_sign_changes: Vec<f64>,
    pub certified: bool,
    pub smooth_fit: Option<SmoothFit>,
}

/// Checks the two-region structure for a constant cap `L`.
///
/// `m` is sampled at every node; the report is certified when `m` keeps its
/// sign or changes once from positive to negative. For a certified report
/// the node flags must switch at most once, from unconstrained to
/// constrained, otherwise the solve itself is suspect and an error is
/// returned.
pub fn certify_two_region(
    solution: &ValueSolution,
    utility: &UtilityModel,
    market: &MarketParams,
    l: f64,
) -> Result<RegionReport> {
    if !(l > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "cap level L = {l} must be positive"
        )));
    }
    let x = solution.x();
    let n = x.len();
    let m_samples = (0..n)
        .map(|i| compute_m(solution, utility, market, l, i))
        .collect::<Result<Vec<f64>>>()?;
    let y_samples: Vec<f64> = (0..n)
        .map(|i| {
            market.excess_return() * solution.dv[i]
                + market.sigma * market.sigma * l * solution.d2v[i]
        })
        .collect();
    let (sign_pattern, changes) = classify_signs(&m_samples);
    let m_sign_changes = changes
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (m_samples[i], m_samples[j]);
            x[i] + (x[j] - x[i]) * a / (a - b)
        })
        .collect();
    let certified = matches!(
        sign_pattern,
        SignPattern::NoChange | SignPattern::PositiveToNegative
    );

    let transitions: Vec<usize> = (1..n)
        .filter(|&i| solution.region[i] != solution.region[i - 1])
        .collect();
    let well_formed = match transitions.as_slice() {
        [] => solution.region[0] == Region::Unconstrained,
        [t] => solution.region[*t] == Region::Constrained,
        _ => false,
    };
    if certified && !well_formed {
        return Err(Error::Inconsistent(format!(
            "m certifies two regions but node flags switch at {transitions:?}"
        )));
    }

    let constraint = ConstraintSpec::constant(l);
    let (xstar, smooth_fit) = if well_formed && !transitions.is_empty() {
        match refine_xstar(solution, utility, market, &constraint)? {
            Some(r) => (Some(r.xstar), Some(r.smooth_fit)),
            None => (None, None),
        }
    } else {
        (None, None)
    };
    Ok(RegionReport {
        xstar,
        y_samples,
        m_samples,
        sign_pattern,
        m_sign_changes,
        certified,
        smooth_fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XstarRefinement {
    pub xstar: f64,
    /// Last unconstrained and first constrained node.
    pub bracket: (usize, usize),
    pub smooth_fit: SmoothFit,
}

const FIT_NODES: usize = 4;

/// Locates `x*` where the unconstrained demand meets the cap and measures
/// the smooth-fit mismatch there.
///
/// `x*` is found by bisection (tolerance `1e-6 x*`) on a cubic through the
/// demand-minus-cap values of the four nodes around the flag switch. `V` and
/// its derivatives at `x*` are extrapolated from cubic fits through the
/// values at the four nearest nodes on each side. Returns `None` when the cap never binds on the grid.
pub fn refine_xstar(
    solution: &ValueSolution,
    _utility: &UtilityModel,
    market: &MarketParams,
    constraint: &ConstraintSpec,
) -> Result<Option<XstarRefinement>> {
    let x = solution.x();
    let n = x.len();
    let Some(j) = (1..n).find(|&i| {
        solution.region[i] == Region::Constrained && solution.region[i - 1] == Region::Unconstrained
    }) else {
        log::info!("cap never binds below x_max = {}", x[n - 1]);
        return Ok(None);
    };
    let i = j - 1;
    if i < FIT_NODES + 1 || j + FIT_NODES + 1 >= n {
        return Err(Error::Inconsistent(format!(
            "flag switch at node {j} too close to the grid ends for a smooth-fit check"
        )));
    }
    // demand minus cap on four nodes around the switch
    let idx = [i - 1, i, j, j + 1];
    let xs: Vec<f64> = idx.iter().map(|&k| x[k]).collect();
    let gap: Vec<f64> = idx
        .iter()
        .map(|&k| merton_candidate(market, solution.dv[k], solution.d2v[k]) - constraint.g(x[k]))
        .collect();
    if !gap.iter().all(|g| g.is_finite()) {
        return Err(Error::Inconsistent(
            "non-finite demand near the flag switch".into(),
        ));
    }
    let f = |t: f64| lagrange_derivs(&xs, &gap, t).0;
    let (mut lo, mut hi) = (x[i], x[j]);
    let (flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        return Err(Error::Inconsistent(format!(
            "demand-minus-cap does not change sign on [{lo}, {hi}] ({flo:e}, {fhi:e})"
        )));
    }
    let tol = 1e-6 * lo;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) * flo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let xstar = 0.5 * (lo + hi);

    // one-sided fits use values only, so no difference stencil reaches across x*
    let left: Vec<usize> = (j - FIT_NODES..j).collect();
    let right: Vec<usize> = (j..j + FIT_NODES).collect();
    let fit = |nodes: &[usize]| {
        let xs: Vec<f64> = nodes.iter().map(|&k| x[k]).collect();
        let vs: Vec<f64> = nodes.iter().map(|&k| solution.v[k]).collect();
        lagrange_derivs(&xs, &vs, xstar)
    };
    let (vl, d1l, d2l) = fit(&left);
    let (vr, d1r, d2r) = fit(&right);
    let smooth_fit = SmoothFit {
        v_jump: (vl - vr).abs(),
        dv_jump: (d1l - d1r).abs(),
        d2v_jump: (d2l - d2r).abs(),
        rel_dv: (d1l - d1r).abs() / (0.5 * (d1l + d1r)).abs(),
        rel_d2v: (d2l - d2r).abs() / (0.5 * (d2l + d2r)).abs(),
    };
    Ok(Some(XstarRefinement {
        xstar,
        bracket: (i, j),
        smooth_fit,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_patterns() {
        assert_eq!(classify_signs(&[-1.0, -2.0, -0.5]).0, SignPattern::NoChange);
        assert_eq!(
            classify_signs(&[3.0, 1.0, -1.0, -2.0]).0,
            SignPattern::PositiveToNegative
        );
        assert_eq!(
            classify_signs(&[-3.0, 1.0]).0,
            SignPattern::NegativeToPositive
        );
        assert_eq!(classify_signs(&[1.0, -1.0, 1.0]).0, SignPattern::Multiple);
        // values inside the dead-band do not count as sign changes
        let (p, ch) = classify_signs(&[1.0, 1e-12, -1e-12, 1.0]);
        assert_eq!(p, SignPattern::NoChange);
        assert!(ch.is_empty());
    }

    #[test]
    fn wealth_only_m_closed_form() {
        let market = MarketParams {
            mu: 0.07,
            r: 0.0,
            sigma: 0.2,
            delta: 0.1,
            gamma_growth: 0.5,
            m_growth: 2.0,
        };
        let u = UtilityModel::crra_wealth(0.5);
        for &x in &[0.05, 0.2857, 1.0, 10.0] {
            let m = m_at(&u, &market, 1.0, x, 3.0).unwrap();
            let exact = -x.powf(-1.5) * (0.07 * x - 0.04 * 0.5);
            assert!(
                (m - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                "{x}: {m} vs {exact}"
            );
        }
    }

    #[test]
    fn additive_m_matches_separable_display() {
        let market = MarketParams {
            mu: 0.07,
            r: 0.0,
            sigma: 0.2,
            delta: 0.1,
            gamma_growth: 0.5,
            m_growth: 2.0,
        };
        let (alpha, beta, ru, rv) = (1.3, 0.7, 0.5, 0.4);
        let u = UtilityModel::Additive {
            alpha,
            beta,
            r_u: ru,
            r_v: rv,
        };
        let l = 1.5;
        for &(x, z) in &[(0.1, 4.0), (1.0, 0.8), (7.0, 0.2)] {
            let m = m_at(&u, &market, l, x, z).unwrap();
            // -beta [mu v' + sigma^2 L v''] + K'(z / alpha) mu^2 z^2 / (alpha sigma^2 L),
            // K(zeta) = zeta^{-1/R_u}
            let vp = x.powf(-rv);
            let vpp = -rv * x.powf(-rv - 1.0);
            let kp = -(1.0 / ru) * (z / alpha).powf(-1.0 / ru - 1.0);
            let display =
                -beta * (0.07 * vp + 0.04 * l * vpp) + kp * 0.0049 * z * z / (alpha * 0.04 * l);
            assert!(
                (m - display).abs() <= 1e-8 * display.abs(),
                "{m} vs {display}"
            );
        }
    }
}
