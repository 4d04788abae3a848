//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function takes the demo parameters as a JSON string and
//! returns a JSON string; the plain-Rust versions (`curves`,
//! `certification`, `xstar_sweep`) are what the bindings call and what the
//! native tests exercise.

use hjb_leverage::grid::WealthGrid;
use hjb_leverage::hjb::{solve_hjb, Region, SolverParams, ValueSolution};
use hjb_leverage::model::{ConstraintSpec, MarketParams, UtilityModel};
use hjb_leverage::policy::extract_policy;
use hjb_leverage::region::certify_two_region;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityKind {
    Consumption,
    Wealth,
}

/// Parameters set on the page.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoInput {
    pub mu: f64,
    #[serde(default)]
    pub r: f64,
    pub sigma: f64,
    pub delta: f64,
    pub risk_aversion: f64,
    pub utility: UtilityKind,
    /// Constant cap `L` on the risky dollar amount.
    pub cap: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
}

fn default_n() -> usize {
    600
}

fn default_x_max() -> f64 {
    100.0
}

impl DemoInput {
    fn market(&self) -> MarketParams {
        MarketParams {
            mu: self.mu,
            r: self.r,
            sigma: self.sigma,
            delta: self.delta,
            // CRRA utility grows like x^{1-R}
            gamma_growth: 1.0 - self.risk_aversion,
            m_growth: 2.0,
        }
    }

    fn utility(&self) -> UtilityModel {
        match self.utility {
            UtilityKind::Consumption => UtilityModel::crra_consumption(self.risk_aversion),
            UtilityKind::Wealth => UtilityModel::crra_wealth(self.risk_aversion),
        }
    }

    fn solve(&self, cap: f64) -> Result<ValueSolution, String> {
        let grid = WealthGrid::log(1e-4 * self.x_max, self.x_max, self.n).map_err(err)?;
        solve_hjb(
            &self.market(),
            &self.utility(),
            &ConstraintSpec::constant(cap),
            &grid,
            &SolverParams::default(),
        )
        .map_err(err)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn parse(input: &str) -> Result<DemoInput, String> {
    serde_json::from_str(input).map_err(|e| format!("bad parameters: {e}"))
}

fn to_json(v: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(v).map_err(err)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Curves {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub c: Vec<f64>,
    pub pi: Vec<f64>,
    pub pi_bar: Vec<f64>,
    /// Cap as a proportion of wealth, `L / x`.
    pub cap_bar: Vec<f64>,
    pub constrained: Vec<bool>,
    pub xstar: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Value function and feedback policy on the grid.
pub fn curves(input: &str) -> Result<String, String> {
    let p = parse(input)?;
    let sol = p.solve(p.cap)?;
    let constraint = ConstraintSpec::constant(p.cap);
    let policy = extract_policy(&sol, &p.utility(), &p.market(), &constraint).map_err(err)?;
    let rep = certify_two_region(&sol, &p.utility(), &p.market(), p.cap).map_err(err)?;
    to_json(&Curves {
        x: policy.x.clone(),
        v: sol.v.clone(),
        c: policy.c_star.clone(),
        pi: policy.pi_star.clone(),
        pi_bar: policy.pi_bar.clone(),
        cap_bar: policy.x.iter().map(|x| p.cap / x).collect(),
        constrained: policy
            .region
            .iter()
            .map(|r| *r == Region::Constrained)
            .collect(),
        xstar: rep.xstar,
        iterations: sol.iterations,
        residual: sol.residual_sup,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Certification {
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub y: Vec<f64>,
    pub sign_pattern: String,
    pub m_sign_changes: Vec<f64>,
    pub certified: bool,
    pub xstar: Option<f64>,
}

/// `m(x)`, `Y(x)` and the two-region verdict.
pub fn certification(input: &str) -> Result<String, String> {
    let p = parse(input)?;
    let sol = p.solve(p.cap)?;
    let rep = certify_two_region(&sol, &p.utility(), &p.market(), p.cap).map_err(err)?;
    to_json(&Certification {
        x: sol.x().to_vec(),
        m: rep.m_samples,
        y: rep.y_samples,
        sign_pattern: format!("{:?}", rep.sign_pattern),
        m_sign_changes: rep.m_sign_changes,
        certified: rep.certified,
        xstar: rep.xstar,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Sweep {
    pub cap: Vec<f64>,
    pub xstar: Vec<Option<f64>>,
}

/// `x*` for `count` cap levels spaced geometrically over `[l_min, l_max]`.
pub fn xstar_sweep(input: &str, l_min: f64, l_max: f64, count: usize) -> Result<String, String> {
    let p = parse(input)?;
    if !(l_min > 0.0 && l_max >= l_min) || count == 0 || count > 200 {
        return Err("need 0 < l_min <= l_max and 1 <= count <= 200".into());
    }
    let caps: Vec<f64> = (0..count)
        .map(|k| {
            if count == 1 {
                l_min
            } else {
                l_min * (l_max / l_min).powf(k as f64 / (count - 1) as f64)
            }
        })
        .collect();
    let xstar = caps
        .iter()
        .map(|&l| {
            let sol = p.solve(l)?;
            certify_two_region(&sol, &p.utility(), &p.market(), l)
                .map(|r| r.xstar)
                .map_err(err)
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&Sweep { cap: caps, xstar })
}

#[wasm_bindgen(js_name = solveCurves)]
pub fn solve_curves_js(input: &str) -> Result<String, JsValue> {
    curves(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = certify)]
pub fn certify_js(input: &str) -> Result<String, JsValue> {
    certification(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = sweepXstar)]
pub fn sweep_xstar_js(
    input: &str,
    l_min: f64,
    l_max: f64,
    count: usize,
) -> Result<String, JsValue> {
    xstar_sweep(input, l_min, l_max, count).map_err(|e| JsValue::from_str(&e))
}
