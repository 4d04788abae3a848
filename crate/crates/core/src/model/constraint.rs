use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Cap `g(x)` on the dollar amount held in the risky asset.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    /// `g(x) = L`. An infinite `L` means no cap.
    Constant {
        #[serde(rename = "L")]
        l: f64,
    },
    /// `g(x) = k x + L`.
    Linear {
        k: f64,
        #[serde(rename = "L")]
        l: f64,
    },
    #[serde(skip)]
    CustomConcave(CustomConstraint),
}

#[derive(Clone)]
pub struct CustomConstraint {
    pub g: ScalarFn,
    pub g_prime: ScalarFn,
    pub g_second: ScalarFn,
    pub floor: f64,
    pub label: String,
}

impl fmt::Debug for ConstraintSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintSpec::Constant { l } => write!(f, "Constant(L={l})"),
            ConstraintSpec::Linear { k, l } => write!(f, "Linear(k={k}, L={l})"),
            ConstraintSpec::CustomConcave(c) => {
                write!(f, "CustomConcave({}, L={})", c.label, c.floor)
            }
        }
    }
}

impl PartialEq for ConstraintSpec {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ConstraintSpec::Constant { l: a }, ConstraintSpec::Constant { l: b }) => a == b,
            (ConstraintSpec::Linear { k: k1, l: a }, ConstraintSpec::Linear { k: k2, l: b }) => {
                k1 == k2 && a == b
            }
            (ConstraintSpec::CustomConcave(a), ConstraintSpec::CustomConcave(b)) => {
                Arc::ptr_eq(&a.g, &b.g)
            }
            _ => false,
        }
    }
}

impl ConstraintSpec {
    pub fn constant(l: f64) -> Self {
        ConstraintSpec::Constant { l }
    }

    pub fn unbounded() -> Self {
        ConstraintSpec::Constant { l: f64::INFINITY }
    }

    pub fn g(&self, x: f64) -> f64 {
        match self {
            ConstraintSpec::Constant { l } => *l,
            ConstraintSpec::Linear { k, l } => k * x + l,
            ConstraintSpec::CustomConcave(c) => (c.g)(x),
        }
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        match self {
            ConstraintSpec::Constant { .. } => 0.0,
            ConstraintSpec::Linear { k, .. } => *k,
            ConstraintSpec::CustomConcave(c) => (c.g_prime)(x),
        }
    }

    pub fn g_second(&self, x: f64) -> f64 {
        match self {
            ConstraintSpec::CustomConcave(c) => (c.g_second)(x),
            _ => 0.0,
        }
    }

    /// Floor `L` with `g(x) >= L` for all `x > 0`.
    pub fn floor(&self) -> f64 {
        match self {
            ConstraintSpec::Constant { l } | ConstraintSpec::Linear { l, .. } => *l,
            ConstraintSpec::CustomConcave(c) => c.floor,
        }
    }

    /// `Some(L)` when the cap is a constant.
    pub fn constant_level(&self) -> Option<f64> {
        match self {
            ConstraintSpec::Constant { l } => Some(*l),
            _ => None,
        }
    }

    pub fn check(&self) -> Result<()> {
        let l = self.floor();
        if l.is_nan() || l <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "floor L = {l} must be positive"
            )));
        }
        if let ConstraintSpec::Linear { k, .. } = self {
            if !(k.is_finite() && *k >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "slope k = {k} must be >= 0"
                )));
            }
        }
        Ok(())
    }
}
