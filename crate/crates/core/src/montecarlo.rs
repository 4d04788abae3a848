//! Euler-Maruyama simulation of controlled wealth
//!
//! ```text
//! dX = [(mu - r) pi + r X - c] dt + sigma pi dW
//! ```
//!
//! under a tabulated feedback policy, estimating `E int_0^T e^{-delta t} f(c_t, X_t) dt`.
//!
//! Random numbers: ChaCha8 seeded with `seed`, one stream per path
//! (`set_stream(path_index)`), standard normals from `rand_distr`. A path's
//! draws depend only on `(seed, path_index)`, so results are identical for
//! any thread count and two policies simulated with the same config see the
//! same shocks.
//!
//! Below the first grid node the policy keeps the proportions `c/x`, `pi/x`
//! of that node; above the last node it is frozen at the last node's values
//! and the path is counted. Wealth is absorbed at zero.
//!
//! The truncation error beyond `T` is bounded with a supersolution
//! `W(x) = K (x + k)^gamma + m0 / delta`, see [`tail_bound`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GrowthEnvelope, MarketParams, UtilityModel};
use crate::numerics::{pairwise_sum, MonotoneCubic};
use crate::policy::PolicyTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub x0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.x0 > 0.0 && self.horizon > 0.0 && self.horizon.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need x0, horizon, dt > 0 ({self:?})"
            )));
        }
        if self.dt > 1e-3 * self.horizon * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds 1e-3 * horizon = {}",
                self.dt,
                1e-3 * self.horizon
            )));
        }
        if self.n_paths < 1000 {
            return Err(Error::InvalidParameter(format!(
                "n_paths = {} below 1000",
                self.n_paths
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub estimate: f64,
    pub stderr: f64,
    pub absorbed_frac: f64,
    pub tail_bound: f64,
    /// Fraction of paths that went above the last grid node.
    pub xmax_frac: f64,
    pub n_paths: usize,
    pub steps: usize,
    pub warnings: Vec<String>,
}

/// Share of paths allowed above the grid before a run is rejected.
pub const XMAX_LIMIT: f64 = 0.01;

const PATH_BLOCK: usize = 256;

/// Interval lookup from the bit pattern of a positive `f64`: the exponent
/// and leading mantissa bits index a table of the interval containing the
/// bucket's lower end. Buckets are narrower than any grid cell, so one
/// comparison finishes the search without data-dependent branches.
struct Buckets {
    shift: u32,
    base: u64,
    table: Vec<u32>,
}

impl Buckets {
    const MAX_BITS: u32 = 16;

    fn new(nodes: &[f64]) -> Option<Self> {
        let finest = nodes
            .windows(2)
            .map(|w| w[1] / (w[1] - w[0]))
            .fold(0.0_f64, f64::max);
        let bits = finest.log2().ceil() as u32 + 1;
        if bits > Self::MAX_BITS || nodes.len() > u32::MAX as usize {
            return None;
        }
        let shift = 52 - bits;
        let base = nodes[0].to_bits() >> shift;
        let top = nodes[nodes.len() - 1].to_bits() >> shift;
        let mut table = Vec::with_capacity((top - base + 1) as usize);
        let mut k = 0usize;
        for b in base..=top {
            let lo = f64::from_bits(b << shift);
            while k + 2 < nodes.len() && nodes[k + 1] <= lo {
                k += 1;
            }
            table.push(k as u32);
        }
        Some(Buckets { shift, base, table })
    }

    /// Interval of `x`, which must lie in `[nodes[0], nodes[n-1]]`.
    #[inline(always)]
    fn locate(&self, nodes: &[f64], x: f64) -> usize {
        let k = self.table[((x.to_bits() >> self.shift) - self.base) as usize] as usize;
        (k + (x > nodes[k + 1]) as usize).min(nodes.len() - 2)
    }
}

/// Per-interval cubic coefficients of `c`, `pi` and the running reward.
struct Kernel {
    buckets: Option<Buckets>,
    nodes: Vec<f64>,
    inv_h: Vec<f64>,
    coeffs: Vec<[f64; 12]>,
    low: (f64, f64),
    high: (f64, f64),
    ex: f64,
    r: f64,
    sigma: f64,
}

impl Kernel {
    fn new(table: &PolicyTable, market: &MarketParams, utility: &UtilityModel) -> Result<Self> {
        let x = &table.x;
        let n = x.len();
        let reward: Vec<f64> = x
            .iter()
            .zip(&table.c_star)
            .map(|(&x, &c)| utility.f(c, x))
            .collect();
        if let Some(i) = reward.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "f",
                c: table.c_star[i],
                x: x[i],
                value: reward[i],
            });
        }
        let fr = MonotoneCubic::new(x.clone(), reward);
        let coeffs = (0..n - 1)
            .map(|k| {
                let (c, p, f) = (
                    table.c_interp().power_coeffs(k),
                    table.pi_interp().power_coeffs(k),
                    fr.power_coeffs(k),
                );
                [
                    c[0], c[1], c[2], c[3], p[0], p[1], p[2], p[3], f[0], f[1], f[2], f[3],
                ]
            })
            .collect();
        Ok(Kernel {
            buckets: Buckets::new(x),
            inv_h: x.windows(2).map(|w| 1.0 / (w[1] - w[0])).collect(),
            nodes: x.clone(),
            coeffs,
            low: (table.c_star[0] / x[0], table.pi_star[0] / x[0]),
            high: (table.c_star[n - 1], table.pi_star[n - 1]),
            ex: market.excess_return(),
            r: market.r,
            sigma: market.sigma,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PathOutcome {
    value: f64,
    absorbed: bool,
    above: bool,
}

/// Paths advanced in lockstep; independent lanes hide the latency of the
/// per-step dependency chain.
const LANES: usize = 4;

/// Simulates paths `first .. first + count` (`count <= LANES`).
fn simulate_lanes(
    kernel: &Kernel,
    market: &MarketParams,
    utility: &UtilityModel,
    cfg: &SimConfig,
    first: u64,
    count: usize,
) -> [PathOutcome; LANES] {
    let mut rngs: [ChaCha8Rng; LANES] = std::array::from_fn(|j| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(first + j as u64);
        rng
    });
    let steps = cfg.steps();
    let dt = cfg.dt;
    let sqdt = dt.sqrt();
    let decay = (-market.delta * dt).exp();
    let nodes = &kernel.nodes;
    let last = nodes.len() - 2;
    let (x_lo, x_hi) = (nodes[0], nodes[last + 1]);
    let k0 = nodes
        .partition_point(|&v| v <= cfg.x0)
        .saturating_sub(1)
        .min(last);

    let mut x = [cfg.x0; LANES];
    let mut k = [k0; LANES];
    let mut acc = [0.0; LANES];
    let mut alive: [bool; LANES] = std::array::from_fn(|j| j < count);
    let mut out = [PathOutcome::default(); LANES];
    let mut disc = 1.0;
    let mut z = [0.0; LANES];
    for _ in 0..steps {
        for j in 0..LANES {
            z[j] = StandardNormal.sample(&mut rngs[j]);
        }
        for j in 0..LANES {
            if !alive[j] {
                continue;
            }
            let xj = x[j];
            let (c, pi, f) = if xj < x_lo {
                let (c, pi) = (kernel.low.0 * xj, kernel.low.1 * xj);
                (c, pi, utility.f(c, xj))
            } else if xj > x_hi {
                out[j].above = true;
                let (c, pi) = kernel.high;
                (c, pi, utility.f(c, xj))
            } else {
                let kj = match &kernel.buckets {
                    Some(b) => b.locate(nodes, xj),
                    None => {
                        let mut kj = k[j];
                        while xj > nodes[kj + 1] {
                            kj += 1;
                        }
                        while xj < nodes[kj] {
                            kj -= 1;
                        }
                        k[j] = kj;
                        kj
                    }
                };
                let t = (xj - nodes[kj]) * kernel.inv_h[kj];
                let a = &kernel.coeffs[kj];
                (
                    a[0] + t * (a[1] + t * (a[2] + t * a[3])),
                    a[4] + t * (a[5] + t * (a[6] + t * a[7])),
                    a[8] + t * (a[9] + t * (a[10] + t * a[11])),
                )
            };
            acc[j] += disc * f;
            let next =
                xj + (kernel.ex * pi + kernel.r * xj - c) * dt + kernel.sigma * pi * sqdt * z[j];
            if next <= 0.0 {
                // absorbed: zero controls and f(0, 0) = 0 from here on
                x[j] = 0.0;
                out[j].absorbed = true;
                alive[j] = false;
            } else {
                x[j] = next;
            }
        }
        disc *= decay;
    }
    for j in 0..LANES {
        out[j].value = acc[j] * dt;
    }
    out
}

fn run_paths(
    kernel: &Kernel,
    market: &MarketParams,
    utility: &UtilityModel,
    cfg: &SimConfig,
) -> Vec<PathOutcome> {
    let mut out = vec![PathOutcome::default(); cfg.n_paths];
    out.par_chunks_mut(PATH_BLOCK)
        .enumerate()
        .for_each(|(b, chunk)| {
            for (g, lanes) in chunk.chunks_mut(LANES).enumerate() {
                let first = (b * PATH_BLOCK + g * LANES) as u64;
                let res = simulate_lanes(kernel, market, utility, cfg, first, lanes.len());
                lanes.copy_from_slice(&res[..lanes.len()]);
            }
        });
    out
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_table_covers(table: &PolicyTable, x0: f64) -> Result<()> {
    let (lo, hi) = (table.x[0], table.x[table.len() - 1]);
    if !(x0 > lo && x0 < hi) {
        return Err(Error::OutOfRange { x: x0, lo, hi });
    }
    Ok(())
}

/// Monte Carlo estimate of the discounted reward of `table` from `config.x0`.
pub fn simulate_value(
    table: &PolicyTable,
    market: &MarketParams,
    utility: &UtilityModel,
    config: &SimConfig,
) -> Result<SimResult> {
    config.check()?;
    market.require_well_posed()?;
    check_table_covers(table, config.x0)?;
    let kernel = Kernel::new(table, market, utility)?;
    let paths = run_paths(&kernel, market, utility, config);
    summarize(table, market, utility, config, &paths)
}

fn summarize(
    table: &PolicyTable,
    market: &MarketParams,
    utility: &UtilityModel,
    config: &SimConfig,
    paths: &[PathOutcome],
) -> Result<SimResult> {
    let n = paths.len() as f64;
    let values: Vec<f64> = paths.iter().map(|p| p.value).collect();
    let (estimate, stderr) = mean_stderr(&values);
    let absorbed_frac = paths.iter().filter(|p| p.absorbed).count() as f64 / n;
    let xmax_frac = paths.iter().filter(|p| p.above).count() as f64 / n;
    if xmax_frac > XMAX_LIMIT {
        return Err(Error::Grid(format!(
            "{:.2}% of paths left the grid above x_max = {}; enlarge the grid",
            100.0 * xmax_frac,
            table.x[table.len() - 1]
        )));
    }
    let tail = tail_bound(table, market, utility, config.x0, config.horizon)?;
    let mut warnings = Vec::new();
    if tail > 1e-3 * estimate.abs() {
        warnings.push(format!(
            "truncation bound {tail:e} exceeds 1e-3 of the estimate; lengthen the horizon"
        ));
    }
    if xmax_frac > 0.0 {
        warnings.push(format!(
            "{:.4}% of paths went above x_max",
            100.0 * xmax_frac
        ));
    }
    Ok(SimResult {
        estimate,
        stderr,
        absorbed_frac,
        tail_bound: tail,
        xmax_frac,
        n_paths: paths.len(),
        steps: config.steps(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    /// Mean of `optimal - alternative` over paired paths.
    pub mean_diff: f64,
    pub stderr: f64,
    pub optimal: SimResult,
    pub alternative: SimResult,
    /// The alternative beats the optimal policy by more than 3 stderr.
    pub violation: bool,
    /// The optimal policy beats the alternative by at least 3 stderr.
    pub superior: bool,
}

fn check_admissible(table: &PolicyTable) -> Result<()> {
    for i in 0..table.len() {
        let (c, pi, cap) = (table.c_star[i], table.pi_star[i], table.cap[i]);
        if !(c >= 0.0) || !(pi >= 0.0) || pi > cap + 1e-12 * cap.abs().max(1.0) {
            return Err(Error::Inadmissible(format!(
                "node {i} (x = {}): c = {c}, pi = {pi}, cap = {cap}",
                table.x[i]
            )));
        }
    }
    Ok(())
}

/// Paired comparison of two policies on common random numbers.
pub fn dominance_check(
    table_opt: &PolicyTable,
    table_alt: &PolicyTable,
    market: &MarketParams,
    utility: &UtilityModel,
    config: &SimConfig,
) -> Result<DominanceReport> {
    config.check()?;
    market.require_well_posed()?;
    check_admissible(table_opt)?;
    check_admissible(table_alt)?;
    check_table_covers(table_opt, config.x0)?;
    check_table_covers(table_alt, config.x0)?;
    let k_opt = Kernel::new(table_opt, market, utility)?;
    let k_alt = Kernel::new(table_alt, market, utility)?;
    let p_opt = run_paths(&k_opt, market, utility, config);
    let p_alt = run_paths(&k_alt, market, utility, config);
    let diffs: Vec<f64> = p_opt
        .iter()
        .zip(&p_alt)
        .map(|(a, b)| a.value - b.value)
        .collect();
    let (mean_diff, stderr) = mean_stderr(&diffs);
    Ok(DominanceReport {
        mean_diff,
        stderr,
        optimal: summarize(table_opt, market, utility, config, &p_opt)?,
        alternative: summarize(table_alt, market, utility, config, &p_alt)?,
        violation: -mean_diff > 3.0 * stderr,
        superior: mean_diff >= 3.0 * stderr,
    })
}

/// Growth constants `f(c, x) <= m0 + mc c^gamma + mx x^gamma`.
fn envelope(market: &MarketParams, utility: &UtilityModel) -> GrowthEnvelope {
    utility
        .growth_envelope(market.gamma_growth)
        .unwrap_or(GrowthEnvelope {
            m0: market.m_growth,
            mc: market.m_growth,
            mx: market.m_growth,
        })
}

/// Largest `pi / (x + k)` the simulated policy can reach, allowing for
/// interpolation between nodes and the extensions beyond the grid.
fn cap_ratio(table: &PolicyTable, k: f64) -> f64 {
    let (x, pi) = (&table.x, &table.pi_star);
    let n = x.len();
    let mut rho = pi[n - 1] / (x[n - 1] + k);
    for i in 0..n - 1 {
        rho = rho.max(pi[i].max(pi[i + 1]) / (x[i] + k));
    }
    rho
}

/// Smallest `K` with `(delta - kappa) K >= mx + (1 - gamma) mc^{1/(1-gamma)} K^{-gamma/(1-gamma)}`.
fn supersolution_scale(gap: f64, gamma: f64, env: &GrowthEnvelope) -> f64 {
    let rhs = |k: f64| {
        env.mx + (1.0 - gamma) * env.mc.powf(1.0 / (1.0 - gamma)) * k.powf(-gamma / (1.0 - gamma))
    };
    if env.mc == 0.0 {
        return env.mx / gap;
    }
    let (mut lo, mut hi) = (1e-300_f64, 1.0_f64);
    while gap * hi < rhs(hi) {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if gap * mid >= rhs(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    hi
}

/// `(kappa_k, K_k)` for shift `k`, or `None` when the growth rate is not
/// below `delta`.
fn bound_constants(
    table: &PolicyTable,
    market: &MarketParams,
    env: &GrowthEnvelope,
    k: f64,
) -> Option<(f64, f64)> {
    let gamma = market.gamma_growth;
    let ex = market.excess_return();
    let s2 = market.sigma * market.sigma;
    let rho_star = ex / (s2 * (1.0 - gamma));
    let s = cap_ratio(table, k).min(rho_star);
    let psi = ex * s - 0.5 * s2 * (1.0 - gamma) * s * s;
    let kappa = gamma * market.r + gamma * psi;
    let gap = market.delta - kappa;
    (gap > 0.0).then(|| (kappa, supersolution_scale(gap, gamma, env)))
}

fn shifts(x0: f64) -> impl Iterator<Item = f64> {
    std::iter::once(0.0)
        .chain((0..=80).map(move |j| x0 * 10f64.powf(-4.0 + 10.0 * j as f64 / 80.0)))
}

/// Upper bound on `E int_T^inf e^{-delta t} f(c_t, X_t) dt` for the policy in
/// `table` started at `x0`.
///
/// For `k >= 0` and `Z = X + k`, the policy keeps `pi <= rho_k Z`, so
/// `W = K Z^gamma + m0/delta` satisfies
/// `L W - delta W + f <= 0` whenever `kappa_k = gamma r + gamma psi(min(rho_k, rho*))`,
/// `psi(s) = (mu - r) s - sigma^2 (1 - gamma) s^2 / 2`, is below `delta`
/// and `K` solves `(delta - kappa_k) K >= mx + (1 - gamma) mc^{1/(1-gamma)} K^{-gamma/(1-gamma)}`.
/// With `E Z_T^gamma <= Z_0^gamma e^{kappa_k T}` this gives
/// `e^{-delta T} [K (x0 + k)^gamma e^{kappa_k T} + m0 / delta]`, minimized over `k`.
pub fn tail_bound(
    table: &PolicyTable,
    market: &MarketParams,
    utility: &UtilityModel,
    x0: f64,
    horizon: f64,
) -> Result<f64> {
    let env = envelope(market, utility);
    let gamma = market.gamma_growth;
    let best = shifts(x0)
        .filter_map(|k| {
            bound_constants(table, market, &env, k).map(|(kappa, kk)| {
                (-(market.delta - kappa) * horizon).exp() * kk * (x0 + k).powf(gamma)
                    + (-market.delta * horizon).exp() * env.m0 / market.delta
            })
        })
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(Error::IllPosed {
            delta: market.delta,
            bound: market.well_posedness_bound(),
        });
    }
    Ok(best)
}

/// Shortest horizon (to 1e-6 relative) with `tail_bound <= target`.
pub fn horizon_for_tail(
    table: &PolicyTable,
    market: &MarketParams,
    utility: &UtilityModel,
    x0: f64,
    target: f64,
) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tail target {target} must be positive"
        )));
    }
    let mut hi = 1.0;
    while tail_bound(table, market, utility, x0, hi)? > target {
        hi *= 2.0;
        if hi > 1e7 {
            return Err(Error::InvalidParameter("tail target unreachable".into()));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if tail_bound(table, market, utility, x0, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::Region;

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

    fn proportional_table(c_prop: f64, pi_prop: f64, cap: f64) -> PolicyTable {
        let x: Vec<f64> = (0..=400)
            .map(|i| 10f64.powf(-3.0 + 7.0 * i as f64 / 400.0))
            .collect();
        let pi: Vec<f64> = x.iter().map(|x| (pi_prop * x).min(cap)).collect();
        let region = pi
            .iter()
            .map(|&p| {
                if p >= cap {
                    Region::Constrained
                } else {
                    Region::Unconstrained
                }
            })
            .collect();
        PolicyTable::new(
            x.clone(),
            x.iter().map(|x| c_prop * x).collect(),
            pi,
            region,
            vec![cap; x.len()],
        )
        .unwrap()
    }

    fn cfg(n_paths: usize, seed: u64) -> SimConfig {
        SimConfig {
            x0: 1.0,
            horizon: 40.0,
            dt: 0.02,
            n_paths,
            seed,
        }
    }

    #[test]
    fn zero_policy_earns_nothing() {
        let t = proportional_table(0.0, 0.0, 1.0);
        let r = simulate_value(
            &t,
            &market(),
            &UtilityModel::crra_consumption(0.5),
            &cfg(1000, 1),
        )
        .unwrap();
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let t = proportional_table(0.0775, 3.5, 1.0);
        let u = UtilityModel::crra_consumption(0.5);
        let a = simulate_value(&t, &market(), &u, &cfg(2000, 7)).unwrap();
        let b = simulate_value(&t, &market(), &u, &cfg(2000, 7)).unwrap();
        assert_eq!(a, b);
        let c = simulate_value(&t, &market(), &u, &cfg(2000, 8)).unwrap();
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn stderr_scales_with_path_count() {
        let t = proportional_table(0.0775, 3.5, 1.0);
        let u = UtilityModel::crra_consumption(0.5);
        let a = simulate_value(&t, &market(), &u, &cfg(2000, 3)).unwrap();
        let b = simulate_value(&t, &market(), &u, &cfg(8000, 3)).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
    }

    #[test]
    fn self_comparison_has_zero_difference() {
        let t = proportional_table(0.0775, 3.5, 1.0);
        let u = UtilityModel::crra_consumption(0.5);
        let d = dominance_check(&t, &t, &market(), &u, &cfg(1000, 5)).unwrap();
        assert_eq!(d.mean_diff, 0.0);
        assert!(!d.violation);
    }

    #[test]
    fn inadmissible_alternative_rejected() {
        let t = proportional_table(0.0775, 3.5, 1.0);
        let mut bad = t.clone();
        bad.pi_star[200] = 2.0;
        let u = UtilityModel::crra_consumption(0.5);
        let err = dominance_check(&t, &bad, &market(), &u, &cfg(1000, 5)).unwrap_err();
        assert!(matches!(err, Error::Inadmissible(_)));
    }

    #[test]
    fn bucket_lookup_matches_binary_search() {
        let grids: Vec<Vec<f64>> = vec![
            (0..=1000)
                .map(|i| 0.01 * 10f64.powf(4.0 * i as f64 / 1000.0))
                .collect(),
            (0..=500).map(|i| 0.01 + 99.99 * i as f64 / 500.0).collect(),
        ];
        for nodes in grids {
            let b = Buckets::new(&nodes).unwrap();
            let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
            for j in 0..=20_000 {
                let x = lo * (hi / lo).powf(j as f64 / 20_000.0);
                let x = x.clamp(lo, hi);
                let k = b.locate(&nodes, x);
                assert!(nodes[k] <= x && x <= nodes[k + 1], "x = {x}, k = {k}");
            }
            for (i, &x) in nodes.iter().enumerate() {
                let k = b.locate(&nodes, x);
                assert!(k == i || k + 1 == i, "node {i} -> {k}");
            }
        }
    }

    #[test]
    fn supersolution_scale_solves_its_equation() {
        let env = GrowthEnvelope {
            m0: 0.0,
            mc: 2.0,
            mx: 0.0,
        };
        let k = supersolution_scale(0.05, 0.5, &env);
        // mc = 2, gamma = 1/2: K^2 = 2 / gap
        assert!((k - (2.0f64 / 0.05).sqrt()).abs() < 1e-9 * k);
    }

    #[test]
    fn tail_bound_decays_and_horizon_hits_target() {
        let t = proportional_table(0.0775, 3.5, 1.0);
        let u = UtilityModel::crra_consumption(0.5);
        let b10 = tail_bound(&t, &market(), &u, 1.0, 10.0).unwrap();
        let b50 = tail_bound(&t, &market(), &u, 1.0, 50.0).unwrap();
        assert!(b50 < b10);
        let h = horizon_for_tail(&t, &market(), &u, 1.0, 1e-3).unwrap();
        let at = tail_bound(&t, &market(), &u, 1.0, h).unwrap();
        assert!(at <= 1e-3 && at > 0.9e-3, "{at}");
    }
}
