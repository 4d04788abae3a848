//! Monotone policy-iteration solver for the stationary HJB equation
//!
//! ```text
//! delta V = max_{pi <= g(x)} [(mu - r) pi V' + 1/2 sigma^2 pi^2 V'']
//!         + max_{c >= 0} [f(c, x) - c V'] + r x V'
//! ```
//!
//! on a truncated wealth grid. Each Howard step freezes the feedback controls
//! `c = I(x, V')`, `pi = min(-(mu - r) V' / (sigma^2 V''), g(x))`, and solves the
//! resulting linear equation as a tridiagonal system. The drift term uses the
//! central stencil where that keeps the matrix an M-matrix and falls back to
//! upwinding elsewhere; the diffusion term is always central.
//!
//! Both ends carry a local power-law closure `V ~ C x^q` whose exponent is
//! refreshed from the current iterate: at the left end this encodes
//! `V(0) = 0`, at the right end it stands in for the missing far-field
//! condition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WealthGrid;
use crate::model::{ConstraintSpec, MarketParams, UtilityModel};
use crate::numerics::{central_second, solve_tridiagonal, MonotoneCubic, Stencil};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    /// Relative sup-norm change between Howard iterates that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Damping in `(0, 1]`.
    pub relax: f64,
    /// Re-solve with `x_max` doubled and reject the solve if the inner half
    /// of the grid moves by more than [`FAR_FIELD_LIMIT`].
    pub far_field_check: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            tol: 1e-10,
            max_iter: 500,
            relax: 1.0,
            far_field_check: true,
        }
    }
}

pub const FAR_FIELD_LIMIT: f64 = 1e-4;

impl SolverParams {
    pub fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter < 1 || !(self.relax > 0.0 && self.relax <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "solver needs tol > 0, max_iter >= 1, relax in (0, 1] (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Unconstrained,
    Constrained,
}

impl Region {
    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Unconstrained => "U",
            Region::Constrained => "B",
        }
    }

    pub fn parse(s: &str) -> Option<Region> {
        match s {
            "U" => Some(Region::Unconstrained),
            "B" => Some(Region::Constrained),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum Drift {
    Central,
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub last_change: f64,
    /// Interior nodes where `V''` was not negative and the cap was imposed.
    pub degenerate_nodes: Vec<usize>,
    /// Interior nodes where the drift had to be upwinded.
    pub upwind_nodes: usize,
    pub far_field_change: Option<f64>,
    pub left_exponent: f64,
    pub right_exponent: f64,
}

/// Grid samples of the value function and its derivatives.
///
/// `dv` is the first difference used by the scheme at each node (central or
/// upwind), `d2v` the central second difference; the end nodes carry the
/// derivatives of the local power-law closure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSolution {
    pub grid: WealthGrid,
    pub v: Vec<f64>,
    pub dv: Vec<f64>,
    pub d2v: Vec<f64>,
    pub region: Vec<Region>,
    pub iterations: usize,
    pub residual_sup: f64,
    pub diagnostics: SolveDiagnostics,
}

/// Unconstrained risky dollar demand `-(mu - r) V' / (sigma^2 V'')`, infinite
/// when `V''` is not negative.
pub fn merton_candidate(market: &MarketParams, dv: f64, d2v: f64) -> f64 {
    if d2v < 0.0 {
        -market.excess_return() * dv / (market.sigma * market.sigma * d2v)
    } else {
        f64::INFINITY
    }
}

pub fn classify(
    market: &MarketParams,
    constraint: &ConstraintSpec,
    x: f64,
    dv: f64,
    d2v: f64,
) -> Region {
    if merton_candidate(market, dv, d2v) >= constraint.g(x) {
        Region::Constrained
    } else {
        Region::Unconstrained
    }
}

fn power_exponent(x0: f64, v0: f64, x1: f64, v1: f64, lo: f64) -> f64 {
    if v0 > 0.0 && v1 > 0.0 {
        let q = (v1 / v0).ln() / (x1 / x0).ln();
        if q.is_finite() {
            return q.clamp(lo, 1.0);
        }
    }
    1.0
}

impl ValueSolution {
    /// Builds a solution from exact samples of `V`, `V'`, `V''`.
    pub fn from_arrays(
        grid: WealthGrid,
        v: Vec<f64>,
        dv: Vec<f64>,
        d2v: Vec<f64>,
        market: &MarketParams,
        constraint: &ConstraintSpec,
    ) -> Self {
        let region = grid
            .nodes()
            .iter()
            .zip(dv.iter().zip(&d2v))
            .map(|(&x, (&d1, &d2))| classify(market, constraint, x, d1, d2))
            .collect();
        ValueSolution {
            grid,
            v,
            dv,
            d2v,
            region,
            iterations: 0,
            residual_sup: f64::NAN,
            diagnostics: SolveDiagnostics::default(),
        }
    }

    /// Builds a solution from samples of `V` alone using central differences
    /// in the interior and the power-law closure at the ends.
    pub fn from_samples(
        grid: WealthGrid,
        v: Vec<f64>,
        market: &MarketParams,
        constraint: &ConstraintSpec,
    ) -> Self {
        let drift = vec![Drift::Central; grid.len()];
        let (dv, d2v, _, _) = derivatives(grid.nodes(), &v, &drift);
        Self::from_arrays(grid, v, dv, d2v, market, constraint)
    }

    pub fn x(&self) -> &[f64] {
        self.grid.nodes()
    }

    /// Monotone-cubic interpolation of `V` inside the grid.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        if !(x >= self.grid.x_min() && x <= self.grid.x_max()) {
            return Err(Error::OutOfRange {
                x,
                lo: self.grid.x_min(),
                hi: self.grid.x_max(),
            });
        }
        Ok(MonotoneCubic::new(self.x().to_vec(), self.v.clone()).eval(x))
    }
}

/// Scheme derivatives: `dv` per drift stencil, central `d2v`, power-law ends.
fn derivatives(x: &[f64], v: &[f64], drift: &[Drift]) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let n = x.len();
    let mut dv = vec![0.0; n];
    let mut d2v = vec![0.0; n];
    for i in 1..n - 1 {
        let st = Stencil::at(x, i);
        dv[i] = match drift[i] {
            Drift::Central => Stencil::apply(st.first(), v, i),
            Drift::Forward => (v[i + 1] - v[i]) / st.hp,
            Drift::Backward => (v[i] - v[i - 1]) / st.hm,
        };
        d2v[i] = central_second(x, v, i);
    }
    let (ql, qr) = end_exponents(x, v);
    for (i, q) in [(0, ql), (n - 1, qr)] {
        dv[i] = q * v[i] / x[i];
        d2v[i] = q * (q - 1.0) * v[i] / (x[i] * x[i]);
    }
    (dv, d2v, ql, qr)
}

fn end_exponents(x: &[f64], v: &[f64]) -> (f64, f64) {
    let n = x.len();
    (
        power_exponent(x[1], v[1], x[2], v[2], 1e-6),
        power_exponent(x[n - 3], v[n - 3], x[n - 2], v[n - 2], 0.0),
    )
}

struct Policy {
    c: Vec<f64>,
    pi: Vec<f64>,
}

struct Problem<'a> {
    market: &'a MarketParams,
    utility: &'a UtilityModel,
    constraint: &'a ConstraintSpec,
    x: &'a [f64],
}

impl Problem<'_> {
    /// Drift stencil per node: central when the central scheme is monotone.
    /// Central drift where it keeps the M-matrix property, upwind elsewhere.
    /// Nodes upwinded in `sticky` stay upwinded, which rules out the
    /// two-cycles that a policy-dependent stencil can otherwise cause.
    fn drift_stencils(&self, policy: &Policy, sticky: Option<&[Drift]>) -> Vec<Drift> {
        let (m, x) = (self.market, self.x);
        let n = x.len();
        let mut out = vec![Drift::Central; n];
        for i in 1..n - 1 {
            let st = Stencil::at(x, i);
            let a = policy.pi[i] * m.excess_return() + m.r * x[i] - policy.c[i];
            let two_b = m.sigma * m.sigma * policy.pi[i] * policy.pi[i];
            let keep = sticky.is_some_and(|d| d[i] != Drift::Central);
            out[i] = if !keep && two_b >= a * st.hp && two_b >= -a * st.hm {
                Drift::Central
            } else if a >= 0.0 {
                Drift::Forward
            } else {
                Drift::Backward
            };
        }
        out
    }

    fn linear_solve(&self, policy: &Policy, drift: &[Drift], ql: f64, qr: f64) -> Result<Vec<f64>> {
        let (m, x) = (self.market, self.x);
        let n = x.len();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = 1.0;
        upper[0] = -(x[0] / x[1]).powf(ql);
        diag[n - 1] = 1.0;
        lower[n - 1] = -(x[n - 1] / x[n - 2]).powf(qr);
        for i in 1..n - 1 {
            let st = Stencil::at(x, i);
            let a = policy.pi[i] * m.excess_return() + m.r * x[i] - policy.c[i];
            let b = 0.5 * m.sigma * m.sigma * policy.pi[i] * policy.pi[i];
            let w1 = match drift[i] {
                Drift::Central => st.first(),
                Drift::Forward => [0.0, -1.0 / st.hp, 1.0 / st.hp],
                Drift::Backward => [-1.0 / st.hm, 1.0 / st.hm, 0.0],
            };
            let w2 = st.second();
            lower[i] = -(a * w1[0] + b * w2[0]);
            diag[i] = m.delta - (a * w1[1] + b * w2[1]);
            upper[i] = -(a * w1[2] + b * w2[2]);
            rhs[i] = self.utility.f(policy.c[i], x[i]);
            if !rhs[i].is_finite() {
                return Err(Error::NonFinite {
                    what: "f",
                    c: policy.c[i],
                    x: x[i],
                    value: rhs[i],
                });
            }
        }
        solve_tridiagonal(&lower, &diag, &upper, &rhs)
            .ok_or_else(|| Error::InvalidParameter("singular policy-evaluation system".into()))
    }

    /// Policy evaluation with the end exponents made self-consistent: the
    /// closures are refreshed by a secant iteration on `q -> q_est(v(q))`.
    fn evaluate(
        &self,
        policy: &Policy,
        drift: &[Drift],
        ql: f64,
        qr: f64,
    ) -> Result<(Vec<f64>, f64, f64)> {
        let mut q = [ql, qr];
        let bounds = [(1e-6, 1.0), (0.0, 1.0)];
        let mut prev: [Option<(f64, f64)>; 2] = [None, None];
        let mut v = self.linear_solve(policy, drift, q[0], q[1])?;
        for _ in 0..60 {
            let (el, er) = end_exponents(self.x, &v);
            let est = [el, er];
            let mut done = true;
            let mut next = q;
            for k in 0..2 {
                let resid = est[k] - q[k];
                if resid.abs() > 1e-13 {
                    done = false;
                }
                next[k] = match prev[k] {
                    Some((qp, rp)) if (resid - rp).abs() > 1e-300 && q[k] != qp => {
                        q[k] - resid * (q[k] - qp) / (resid - rp)
                    }
                    _ => est[k],
                };
                if !next[k].is_finite() {
                    next[k] = est[k];
                }
                next[k] = next[k].clamp(bounds[k].0, bounds[k].1);
                prev[k] = Some((q[k], resid));
            }
            if done || next == q {
                break;
            }
            q = next;
            v = self.linear_solve(policy, drift, q[0], q[1])?;
        }
        Ok((v, q[0], q[1]))
    }

    fn initial_policy(&self) -> Policy {
        let (m, x) = (self.market, self.x);
        let prop = 0.5 * m.excess_return() / (m.sigma * m.sigma);
        let consume = if self.utility.has_consumption_margin() {
            0.5 * m.delta
        } else {
            0.0
        };
        Policy {
            c: x.iter().map(|&xi| consume * xi).collect(),
            pi: x
                .iter()
                .map(|&xi| (prop * xi).min(self.constraint.g(xi)))
                .collect(),
        }
    }

    /// Feedback controls from the current derivatives. Returns the indices of
    /// interior nodes where `V''` was not negative.
    fn improve(&self, dv: &[f64], d2v: &[f64]) -> Result<(Policy, Vec<usize>)> {
        let (m, x) = (self.market, self.x);
        let n = x.len();
        let dv_max = dv.iter().cloned().fold(0.0_f64, f64::max);
        let floor = if dv_max > 0.0 {
            1e-12 * dv_max
        } else {
            f64::MIN_POSITIVE
        };
        let mut c = vec![0.0; n];
        let mut pi = vec![0.0; n];
        let mut degenerate = Vec::new();
        for i in 0..n {
            let zeta = dv[i].max(floor);
            c[i] = self.utility.inverse_marginal(x[i], zeta)?;
            let cap = self.constraint.g(x[i]);
            pi[i] = if d2v[i] < 0.0 {
                merton_candidate(m, dv[i].max(0.0), d2v[i]).clamp(0.0, cap)
            } else {
                if i > 0 && i < n - 1 {
                    degenerate.push(i);
                }
                cap
            };
            if !pi[i].is_finite() {
                // an uncapped node with a degenerate second derivative
                pi[i] = 0.0;
            }
        }
        Ok((Policy { c, pi }, degenerate))
    }
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
}

/// Solves the HJB equation on `grid` by Howard policy iteration.
///
/// Well-posedness of the market is enforced; the remaining standing
/// assumptions are the caller's responsibility (see [`crate::model::validate`]).
pub fn solve_hjb(
    market: &MarketParams,
    utility: &UtilityModel,
    constraint: &ConstraintSpec,
    grid: &WealthGrid,
    params: &SolverParams,
) -> Result<ValueSolution> {
    let mut sol = solve_on_grid(market, utility, constraint, grid, params)?;
    if params.far_field_check {
        let wide_grid = grid.with_doubled_x_max()?;
        let wide = solve_on_grid(market, utility, constraint, &wide_grid, params)?;
        // the original nodes are a prefix of the wide grid
        let n = grid.len();
        let change = (n / 4..=3 * n / 4)
            .map(|i| {
                let scale = sol.v[i].abs();
                let d = (wide.v[i] - sol.v[i]).abs();
                if scale > 0.0 {
                    d / scale
                } else {
                    d
                }
            })
            .fold(0.0_f64, f64::max);
        sol.diagnostics.far_field_change = Some(change);
        if change >= FAR_FIELD_LIMIT {
            return Err(Error::FarField {
                change,
                limit: FAR_FIELD_LIMIT,
            });
        }
    }
    Ok(sol)
}

fn solve_on_grid(
    market: &MarketParams,
    utility: &UtilityModel,
    constraint: &ConstraintSpec,
    grid: &WealthGrid,
    params: &SolverParams,
) -> Result<ValueSolution> {
    market.require_well_posed()?;
    utility.check()?;
    constraint.check()?;
    params.check()?;
    let x = grid.nodes();
    let n = x.len();
    let problem = Problem {
        market,
        utility,
        constraint,
        x,
    };

    let mut policy = problem.initial_policy();
    let (mut ql, mut qr) = (0.5, 0.5);
    let mut v = vec![0.0; n];
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut drift = problem.drift_stencils(&policy, None);
    let mut sticky = false;
    let mut prev_change = f64::INFINITY;
    let mut degenerate = Vec::new();
    let mut used_drift = drift.clone();

    for k in 0..params.max_iter {
        iterations = k + 1;
        let (solved, l, r) = problem.evaluate(&policy, &drift, ql, qr)?;
        ql = l;
        qr = r;
        let next: Vec<f64> = if k == 0 || params.relax == 1.0 {
            solved
        } else {
            solved
                .iter()
                .zip(&v)
                .map(|(s, o)| params.relax * s + (1.0 - params.relax) * o)
                .collect()
        };
        let diff = next
            .iter()
            .zip(&v)
            .fold(0.0_f64, |a, (p, q)| a.max((p - q).abs()));
        let scale = sup_abs(&next);
        last_change = if scale > 0.0 { diff / scale } else { diff };
        v = next;

        let (dv, d2v, _, _) = derivatives(x, &v, &drift);
        let (p, deg) = problem.improve(&dv, &d2v)?;
        policy = p;
        degenerate = deg;
        // a change that stops contracting signals a stencil cycle
        if k >= 3 && last_change > 0.5 * prev_change {
            sticky = true;
        }
        prev_change = last_change;
        let fresh = problem.drift_stencils(&policy, sticky.then_some(drift.as_slice()));
        used_drift = std::mem::replace(&mut drift, fresh);
        log::trace!("howard iteration {iterations}: change {last_change:e}");
        if k > 0 && last_change <= params.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            last_change,
        });
    }

    // Final derivatives use the stencils of the last policy evaluation.
    let (dv, d2v, ql, qr) = derivatives(x, &v, &used_drift);
    let d2_scale = sup_abs(&d2v[1..n - 1]);
    if let Some(i) = (1..n - 1).find(|&i| d2v[i] > 1e-8 * d2_scale) {
        return Err(Error::ConcavityLost {
            node: i,
            x: x[i],
            d2v: d2v[i],
        });
    }
    if !degenerate.is_empty() {
        log::warn!(
            "{} degenerate nodes persist at convergence",
            degenerate.len()
        );
    }
    let upwind_nodes = used_drift.iter().filter(|d| **d != Drift::Central).count();
    let mut sol = ValueSolution::from_arrays(grid.clone(), v, dv, d2v, market, constraint);
    sol.iterations = iterations;
    sol.diagnostics = SolveDiagnostics {
        last_change,
        degenerate_nodes: degenerate,
        upwind_nodes,
        far_field_change: None,
        left_exponent: ql,
        right_exponent: qr,
    };
    sol.residual_sup = hjb_residual(&sol, market, utility, constraint)?;
    Ok(sol)
}

/// Right-hand side of the HJB equation at one node given `V'` and `V''`,
/// maximized over `pi <= g(x)` and `c >= 0`.
pub fn hamiltonian(
    market: &MarketParams,
    utility: &UtilityModel,
    constraint: &ConstraintSpec,
    x: f64,
    dv: f64,
    d2v: f64,
) -> Result<f64> {
    let ex = market.excess_return();
    let s2 = market.sigma * market.sigma;
    let cap = constraint.g(x);
    let pi = if d2v < 0.0 {
        merton_candidate(market, dv, d2v).clamp(0.0, cap)
    } else if ex * dv > 0.0 {
        cap
    } else {
        0.0
    };
    let invest = if pi > 0.0 {
        ex * pi * dv + 0.5 * s2 * pi * pi * d2v
    } else {
        0.0
    };
    let consume = if dv > 0.0 {
        let c = utility.inverse_marginal(x, dv)?;
        utility.f(c, x) - c * dv
    } else if utility.has_consumption_margin() && !matches!(utility, UtilityModel::Custom(_)) {
        f64::INFINITY
    } else {
        // no positive price on consumption: only c = 0 stays bounded for
        // utilities with a flat consumption margin
        utility.f(0.0, x)
    };
    Ok(invest + consume + market.r * x * dv)
}

/// Sup-norm of `delta V - H(x, V', V'')` over interior nodes.
pub fn hjb_residual(
    solution: &ValueSolution,
    market: &MarketParams,
    utility: &UtilityModel,
    constraint: &ConstraintSpec,
) -> Result<f64> {
    let x = solution.x();
    let mut sup = 0.0_f64;
    for i in 1..x.len() - 1 {
        let h = hamiltonian(
            market,
            utility,
            constraint,
            x[i],
            solution.dv[i],
            solution.d2v[i],
        )?;
        sup = sup.max((market.delta * solution.v[i] - h).abs());
    }
    Ok(sup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub intervals: usize,
    /// Sup-norm difference to the previous grid on common nodes.
    pub diff_prev: Option<f64>,
    /// `log(diff_{k-1} / diff_k) / log(refinement factor)`.
    pub order: Option<f64>,
    /// Sup-norm error against a reference function, when one is supplied.
    pub error_exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<RefinementRow>,
}

impl ConvergenceTable {
    /// Last observed order from successive differences.
    pub fn observed_order(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.order)
    }

    pub fn diffs(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.diff_prev).collect()
    }
}

fn common_nodes(coarse: &[f64], fine: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut j = 0;
    for (i, &x) in coarse.iter().enumerate() {
        while j < fine.len() && fine[j] < x * (1.0 - 1e-12) {
            j += 1;
        }
        if j < fine.len() && (fine[j] - x).abs() <= 1e-12 * x {
            out.push((i, j));
        }
    }
    out
}

/// Empirical convergence study over a sequence of nested grids.
pub fn refine_study(
    market: &MarketParams,
    utility: &UtilityModel,
    constraint: &ConstraintSpec,
    grids: &[WealthGrid],
    params: &SolverParams,
    exact: Option<&dyn Fn(f64) -> f64>,
) -> Result<ConvergenceTable> {
    if grids.len() < 3 {
        return Err(Error::InvalidParameter(
            "refinement study needs at least 3 grids".into(),
        ));
    }
    let sols = grids
        .iter()
        .map(|g| solve_hjb(market, utility, constraint, g, params))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<RefinementRow> = Vec::with_capacity(sols.len());
    for (k, s) in sols.iter().enumerate() {
        let error_exact = exact.map(|f| {
            s.x()
                .iter()
                .zip(&s.v)
                .fold(0.0_f64, |a, (&x, &v)| a.max((v - f(x)).abs()))
        });
        let (diff_prev, order) = if k == 0 {
            (None, None)
        } else {
            let prev = &sols[k - 1];
            let pairs = common_nodes(prev.x(), s.x());
            if pairs.len() != prev.x().len() {
                return Err(Error::Grid(format!(
                    "grid {k} does not contain the nodes of grid {}",
                    k - 1
                )));
            }
            let d = pairs
                .iter()
                .fold(0.0_f64, |a, &(i, j)| a.max((prev.v[i] - s.v[j]).abs()));
            let factor = (s.x().len() - 1) as f64 / (prev.x().len() - 1) as f64;
            let order = match rows[k - 1].diff_prev {
                Some(dp) if factor > 1.0 && d > 0.0 => Some((dp / d).ln() / factor.ln()),
                _ => None,
            };
            (Some(d), order)
        };
        rows.push(RefinementRow {
            intervals: s.x().len() - 1,
            diff_prev,
            order,
            error_exact,
        });
    }
    Ok(ConvergenceTable { rows })
}
