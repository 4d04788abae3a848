use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real function of `(c, x)` used by [`CustomUtility`].
pub type Callback = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Utility `f(c, x)` of consumption rate and wealth.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UtilityModel {
    /// `c^(1-R) / (1-R)`.
    CrraConsumption { risk_aversion: f64 },
    /// `x^(1-R) / (1-R)`; consumption carries no utility, so the optimal
    /// consumption rate is zero.
    CrraWealth { risk_aversion: f64 },
    /// `alpha c^(1-R_u)/(1-R_u) + beta x^(1-R_v)/(1-R_v)`.
    Additive {
        alpha: f64,
        beta: f64,
        r_u: f64,
        r_v: f64,
    },
    /// `(c^a x^b)^(1-R) / (1-R)`.
    CobbDouglas { a: f64, b: f64, risk_aversion: f64 },
    /// Pointwise callbacks; not serializable.
    #[serde(skip)]
    Custom(CustomUtility),
}

/// Utility given by callbacks for `f` and its first and second partials.
#[derive(Clone)]
pub struct CustomUtility {
    pub f: Callback,
    pub f_c: Callback,
    pub f_x: Callback,
    pub f_cc: Callback,
    pub f_cx: Callback,
    pub f_xx: Callback,
    pub label: String,
}

impl CustomUtility {
    pub fn new(
        label: impl Into<String>,
        f: Callback,
        f_c: Callback,
        f_x: Callback,
        f_cc: Callback,
        f_cx: Callback,
        f_xx: Callback,
    ) -> Self {
        CustomUtility {
            f,
            f_c,
            f_x,
            f_cc,
            f_cx,
            f_xx,
            label: label.into(),
        }
    }
}

impl fmt::Debug for CustomUtility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomUtility({})", self.label)
    }
}

impl fmt::Debug for UtilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UtilityModel::CrraConsumption { risk_aversion } => {
                write!(f, "CrraConsumption(R={risk_aversion})")
            }
            UtilityModel::CrraWealth { risk_aversion } => {
                write!(f, "CrraWealth(R={risk_aversion})")
            }
            UtilityModel::Additive {
                alpha,
                beta,
                r_u,
                r_v,
            } => write!(
                f,
                "Additive(alpha={alpha}, beta={beta}, R_u={r_u}, R_v={r_v})"
            ),
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion,
            } => write!(f, "CobbDouglas(a={a}, b={b}, R={risk_aversion})"),
            UtilityModel::Custom(c) => c.fmt(f),
        }
    }
}

impl PartialEq for UtilityModel {
    fn eq(&self, other: &Self) -> bool {
        use UtilityModel::*;
        match (self, other) {
            (CrraConsumption { risk_aversion: a }, CrraConsumption { risk_aversion: b }) => a == b,
            (CrraWealth { risk_aversion: a }, CrraWealth { risk_aversion: b }) => a == b,
            (
                Additive {
                    alpha: a1,
                    beta: b1,
                    r_u: u1,
                    r_v: v1,
                },
                Additive {
                    alpha: a2,
                    beta: b2,
                    r_u: u2,
                    r_v: v2,
                },
            ) => a1 == a2 && b1 == b2 && u1 == u2 && v1 == v2,
            (
                CobbDouglas {
                    a: a1,
                    b: b1,
                    risk_aversion: r1,
                },
                CobbDouglas {
                    a: a2,
                    b: b2,
                    risk_aversion: r2,
                },
            ) => a1 == a2 && b1 == b2 && r1 == r2,
            (Custom(a), Custom(b)) => Arc::ptr_eq(&a.f, &b.f),
            _ => false,
        }
    }
}

/// Value of the Legendre-Fenchel dual `p(x, zeta) = max_{c >= 0} f(c, x) - c zeta`
/// together with its maximizer and partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualValue {
    pub p: f64,
    pub c_star: f64,
    pub p_x: f64,
    pub p_zeta: f64,
    pub p_xx: f64,
    pub p_xzeta: f64,
    pub p_zetazeta: f64,
}

/// Constants of a bound `f(c, x) <= m0 + mc c^gamma + mx x^gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthEnvelope {
    pub m0: f64,
    pub mc: f64,
    pub mx: f64,
}

const C_FLOOR: f64 = 1e-12;
const BISECTION_RTOL: f64 = 1e-12;

fn in_unit(v: f64) -> bool {
    v > 0.0 && v < 1.0
}

/// `k * z^d` is bounded by `k (z^gamma)` plus an optional constant `k` for
/// `d <= gamma`; `None` when `d > gamma`.
fn power_envelope(d: f64, gamma: f64) -> Option<f64> {
    if (d - gamma).abs() <= 1e-12 {
        Some(0.0)
    } else if d < gamma {
        Some(1.0)
    } else {
        None
    }
}

impl UtilityModel {
    pub fn crra_consumption(risk_aversion: f64) -> Self {
        UtilityModel::CrraConsumption { risk_aversion }
    }

    pub fn crra_wealth(risk_aversion: f64) -> Self {
        UtilityModel::CrraWealth { risk_aversion }
    }

    /// Checks parameter ranges of the closed-form variants.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            UtilityModel::CrraConsumption { risk_aversion: r }
            | UtilityModel::CrraWealth { risk_aversion: r } => {
                if !in_unit(r) {
                    return bad(format!("risk aversion {r} must lie in (0, 1)"));
                }
            }
            UtilityModel::Additive {
                alpha,
                beta,
                r_u,
                r_v,
            } => {
                if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
                    return bad("additive weights must be positive".into());
                }
                if !in_unit(r_u) || !in_unit(r_v) {
                    return bad("additive exponents must lie in (0, 1)".into());
                }
            }
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion,
            } => {
                if !(a > 0.0 && b > 0.0 && a + b < 1.0) {
                    return bad(format!(
                        "Cobb-Douglas needs a > 0, b > 0, a + b < 1 (a={a}, b={b})"
                    ));
                }
                if !in_unit(risk_aversion) {
                    return bad(format!("risk aversion {risk_aversion} must lie in (0, 1)"));
                }
            }
            UtilityModel::Custom(_) => {}
        }
        Ok(())
    }

    /// False for utilities that do not depend on consumption.
    pub fn has_consumption_margin(&self) -> bool {
        !matches!(self, UtilityModel::CrraWealth { .. })
    }

    pub fn is_wealth_only(&self) -> bool {
        matches!(self, UtilityModel::CrraWealth { .. })
    }

    pub fn f(&self, c: f64, x: f64) -> f64 {
        match *self {
            UtilityModel::CrraConsumption { risk_aversion: r } => c.powf(1.0 - r) / (1.0 - r),
            UtilityModel::CrraWealth { risk_aversion: r } => x.powf(1.0 - r) / (1.0 - r),
            UtilityModel::Additive {
                alpha,
                beta,
                r_u,
                r_v,
            } => alpha * c.powf(1.0 - r_u) / (1.0 - r_u) + beta * x.powf(1.0 - r_v) / (1.0 - r_v),
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion: r,
            } => {
                let q = 1.0 - r;
                c.powf(a * q) * x.powf(b * q) / q
            }
            UtilityModel::Custom(ref u) => (u.f)(c, x),
        }
    }

    pub fn f_c(&self, c: f64, x: f64) -> f64 {
        match *self {
            UtilityModel::CrraConsumption { risk_aversion: r } => c.powf(-r),
            UtilityModel::CrraWealth { .. } => 0.0,
            UtilityModel::Additive { alpha, r_u, .. } => alpha * c.powf(-r_u),
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion: r,
            } => {
                let q = 1.0 - r;
                a * c.powf(a * q - 1.0) * x.powf(b * q)
            }
            UtilityModel::Custom(ref u) => (u.f_c)(c, x),
        }
    }

    pub fn f_x(&self, c: f64, x: f64) -> f64 {
        match *self {
            UtilityModel::CrraConsumption { .. } => 0.0,
            UtilityModel::CrraWealth { risk_aversion: r } => x.powf(-r),
            UtilityModel::Additive { beta, r_v, .. } => beta * x.powf(-r_v),
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion: r,
            } => {
                let q = 1.0 - r;
                b * c.powf(a * q) * x.powf(b * q - 1.0)
            }
            UtilityModel::Custom(ref u) => (u.f_x)(c, x),
        }
    }

    pub fn f_cc(&self, c: f64, x: f64) -> f64 {
        match *self {
            UtilityModel::CrraConsumption { risk_aversion: r } => -r * c.powf(-r - 1.0),
            UtilityModel::CrraWealth { .. } => 0.0,
            UtilityModel::Additive { alpha, r_u, .. } => -alpha * r_u * c.powf(-r_u - 1.0),
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion: r,
            } => {
                let q = 1.0 - r;
                let s = a * q;
                a * (s - 1.0) * c.powf(s - 2.0) * x.powf(b * q)
            }
            UtilityModel::Custom(ref u) => (u.f_cc)(c, x),
        }
    }

    pub fn f_cx(&self, c: f64, x: f64) -> f64 {
        match *self {
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion: r,
            } => {
                let q = 1.0 - r;
                let t = b * q;
                a * t * c.powf(a * q - 1.0) * x.powf(t - 1.0)
            }
            UtilityModel::Custom(ref u) => (u.f_cx)(c, x),
            _ => 0.0,
        }
    }

    pub fn f_xx(&self, c: f64, x: f64) -> f64 {
        match *self {
            UtilityModel::CrraConsumption { .. } => 0.0,
            UtilityModel::CrraWealth { risk_aversion: r } => -r * x.powf(-r - 1.0),
            UtilityModel::Additive { beta, r_v, .. } => -beta * r_v * x.powf(-r_v - 1.0),
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion: r,
            } => {
                let q = 1.0 - r;
                let t = b * q;
                b * (t - 1.0) * c.powf(a * q) * x.powf(t - 2.0)
            }
            UtilityModel::Custom(ref u) => (u.f_xx)(c, x),
        }
    }

    /// Consumption `I(x, zeta)` solving `f_c(I, x) = zeta`, or zero when the
    /// marginal utility at `c -> 0` does not exceed `zeta`.
    pub fn inverse_marginal(&self, x: f64, zeta: f64) -> Result<f64> {
        match *self {
            UtilityModel::CrraConsumption { risk_aversion: r } => Ok(zeta.powf(-1.0 / r)),
            UtilityModel::CrraWealth { .. } => Ok(0.0),
            UtilityModel::Additive { alpha, r_u, .. } => Ok((alpha / zeta).powf(1.0 / r_u)),
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion: r,
            } => {
                let q = 1.0 - r;
                let s = a * q;
                Ok((a * x.powf(b * q) / zeta).powf(1.0 / (1.0 - s)))
            }
            UtilityModel::Custom(ref u) => custom_inverse_marginal(u, x, zeta),
        }
    }

    /// Legendre-Fenchel dual and its partials at `(x, zeta)`.
    pub fn dual(&self, x: f64, zeta: f64) -> Result<DualValue> {
        match *self {
            UtilityModel::CrraConsumption { risk_aversion: r } => {
                let c = zeta.powf(-1.0 / r);
                Ok(DualValue {
                    p: r / (1.0 - r) * zeta.powf(-(1.0 - r) / r),
                    c_star: c,
                    p_x: 0.0,
                    p_zeta: -c,
                    p_xx: 0.0,
                    p_xzeta: 0.0,
                    p_zetazeta: c / (r * zeta),
                })
            }
            UtilityModel::CrraWealth { risk_aversion: r } => Ok(DualValue {
                p: x.powf(1.0 - r) / (1.0 - r),
                c_star: 0.0,
                p_x: x.powf(-r),
                p_zeta: 0.0,
                p_xx: -r * x.powf(-r - 1.0),
                p_xzeta: 0.0,
                p_zetazeta: 0.0,
            }),
            UtilityModel::Additive {
                alpha,
                beta,
                r_u,
                r_v,
            } => {
                let c = (alpha / zeta).powf(1.0 / r_u);
                let pc = alpha.powf(1.0 / r_u) * zeta.powf(-(1.0 - r_u) / r_u) * r_u / (1.0 - r_u);
                Ok(DualValue {
                    p: pc + beta * x.powf(1.0 - r_v) / (1.0 - r_v),
                    c_star: c,
                    p_x: beta * x.powf(-r_v),
                    p_zeta: -c,
                    p_xx: -beta * r_v * x.powf(-r_v - 1.0),
                    p_xzeta: 0.0,
                    p_zetazeta: c / (r_u * zeta),
                })
            }
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion: r,
            } => {
                let q = 1.0 - r;
                let s = a * q;
                let t = b * q;
                let coeff = a.powf(1.0 / (1.0 - s)) * (1.0 / s - 1.0);
                let e = s / (s - 1.0);
                let k = t / (1.0 - s);
                let p = coeff * zeta.powf(e) * x.powf(k);
                Ok(DualValue {
                    p,
                    c_star: (a * x.powf(t) / zeta).powf(1.0 / (1.0 - s)),
                    p_x: k * p / x,
                    p_zeta: e * p / zeta,
                    p_xx: k * (k - 1.0) * p / (x * x),
                    p_xzeta: k * e * p / (x * zeta),
                    p_zetazeta: e * (e - 1.0) * p / (zeta * zeta),
                })
            }
            UtilityModel::Custom(ref u) => custom_dual(u, x, zeta),
        }
    }

    /// Tightest growth constants known in closed form for this variant, if
    /// they are compatible with `gamma`; callers fall back to the configured
    /// `M (1 + c^gamma + x^gamma)` otherwise.
    pub fn growth_envelope(&self, gamma: f64) -> Option<GrowthEnvelope> {
        match *self {
            UtilityModel::CrraConsumption { risk_aversion: r } => {
                let k = 1.0 / (1.0 - r);
                power_envelope(1.0 - r, gamma).map(|c0| GrowthEnvelope {
                    m0: c0 * k,
                    mc: k,
                    mx: 0.0,
                })
            }
            UtilityModel::CrraWealth { risk_aversion: r } => {
                let k = 1.0 / (1.0 - r);
                power_envelope(1.0 - r, gamma).map(|c0| GrowthEnvelope {
                    m0: c0 * k,
                    mc: 0.0,
                    mx: k,
                })
            }
            UtilityModel::Additive {
                alpha,
                beta,
                r_u,
                r_v,
            } => {
                let ku = alpha / (1.0 - r_u);
                let kv = beta / (1.0 - r_v);
                let cu = power_envelope(1.0 - r_u, gamma)?;
                let cv = power_envelope(1.0 - r_v, gamma)?;
                Some(GrowthEnvelope {
                    m0: cu * ku + cv * kv,
                    mc: ku,
                    mx: kv,
                })
            }
            UtilityModel::CobbDouglas {
                a,
                b,
                risk_aversion: r,
            } => {
                // weighted AM-GM: c^s x^t <= (s/d) c^d + (t/d) x^d, d = s + t
                let q = 1.0 - r;
                let (s, t) = (a * q, b * q);
                let d = s + t;
                let c0 = power_envelope(d, gamma)?;
                Some(GrowthEnvelope {
                    m0: c0 / q,
                    mc: s / d / q,
                    mx: t / d / q,
                })
            }
            UtilityModel::Custom(_) => None,
        }
    }
}

fn finite(what: &'static str, c: f64, x: f64, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, c, x, value })
    }
}

/// Geometric bisection on `f_c(c, x) = zeta` over `[1e-12, c_hi]`, doubling
/// `c_hi` until the marginal utility drops below `zeta`.
fn custom_inverse_marginal(u: &CustomUtility, x: f64, zeta: f64) -> Result<f64> {
    let fc = |c: f64| finite("f_c", c, x, (u.f_c)(c, x));
    if fc(C_FLOOR)? <= zeta {
        return Ok(0.0);
    }
    let mut lo = C_FLOOR;
    let mut hi = 1.0_f64.max(2.0 * C_FLOOR);
    let mut doublings = 0;
    while fc(hi)? > zeta {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 || !hi.is_finite() {
            return Err(Error::Bracketing { x, zeta, lo, hi });
        }
    }
    for _ in 0..400 {
        if hi - lo <= BISECTION_RTOL * hi {
            break;
        }
        let mid = (lo * hi).sqrt();
        let mid = if mid <= lo || mid >= hi {
            0.5 * (lo + hi)
        } else {
            mid
        };
        if fc(mid)? > zeta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi - lo > BISECTION_RTOL * hi * 10.0 {
        return Err(Error::Bracketing { x, zeta, lo, hi });
    }
    Ok(0.5 * (lo + hi))
}

fn fd_step(v: f64) -> f64 {
    1e-6_f64.max(1e-6 * v.abs())
}

fn custom_dual(u: &CustomUtility, x: f64, zeta: f64) -> Result<DualValue> {
    let c = custom_inverse_marginal(u, x, zeta)?;
    let p = finite("f", c, x, (u.f)(c, x))? - c * zeta;
    let envelope_px = |xx: f64, zz: f64| -> Result<f64> {
        let cc = custom_inverse_marginal(u, xx, zz)?;
        finite("f_x", cc, xx, (u.f_x)(cc, xx))
    };
    let p_x = finite("f_x", c, x, (u.f_x)(c, x))?;
    let hx = fd_step(x).min(0.5 * x);
    let hz = fd_step(zeta).min(0.5 * zeta);
    let p_xx = (envelope_px(x + hx, zeta)? - envelope_px(x - hx, zeta)?) / (2.0 * hx);
    let p_xzeta = (envelope_px(x, zeta + hz)? - envelope_px(x, zeta - hz)?) / (2.0 * hz);
    let i_up = custom_inverse_marginal(u, x, zeta + hz)?;
    let i_dn = custom_inverse_marginal(u, x, zeta - hz)?;
    let p_zetazeta = -(i_up - i_dn) / (2.0 * hz);
    Ok(DualValue {
        p,
        c_star: c,
        p_x,
        p_zeta: -c,
        p_xx,
        p_xzeta,
        p_zetazeta,
    })
}
