//! Dual coordinates `y = V'(x)`, `v(y) = V(x) - x y` on the unconstrained
//! region. There the HJB equation becomes the quasilinear ODE
//!
//! ```text
//! delta (v - y v') = theta y^2 v'' + p(-v', y) - r v' y,   theta = (mu - r)^2 / (2 sigma^2)
//! ```
//!
//! which degenerates only at `y = 0`. Its residual is an independent check on
//! the primal solve, and the ODE can be integrated directly as an
//! initial-value problem.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{Region, ValueSolution};
use crate::io::{write_table, OutputHeader};
use crate::model::{dual_p, MarketParams, UtilityModel};
use crate::numerics::Stencil;

/// Samples of the dual value on an increasing `y` grid, together with the
/// primal coordinates `x = H(y)` and `V = J(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub y: Vec<f64>,
    pub v_dual: Vec<f64>,
    pub dv_dual: Vec<f64>,
    pub d2v_dual: Vec<f64>,
    pub h: Vec<f64>,
    pub j: Vec<f64>,
}

impl DualSolution {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Builds a dual solution from `y` samples of `v`, `v'`, `v''`, filling
    /// in `H = -v'` and `J = v - y v'`.
    pub fn from_dual_samples(y: Vec<f64>, v: Vec<f64>, dv: Vec<f64>, d2v: Vec<f64>) -> Self {
        let h = dv.iter().map(|d| -d).collect();
        let j = y
            .iter()
            .zip(&v)
            .zip(&dv)
            .map(|((y, v), d)| v - y * d)
            .collect();
        DualSolution {
            y,
            v_dual: v,
            dv_dual: dv,
            d2v_dual: d2v,
            h,
            j,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W, header: Option<&OutputHeader>) -> Result<()> {
        let cols: [&[f64]; 6] = [
            &self.y,
            &self.v_dual,
            &self.dv_dual,
            &self.d2v_dual,
            &self.h,
            &self.j,
        ];
        write_table(
            w,
            header,
            &["y", "v", "dv", "d2v", "H", "J"],
            self.len(),
            |r, c| cols[c][r].to_string(),
        )
    }
}

/// Longest run of consecutive unconstrained interior nodes.
fn unconstrained_run(region: &[Region]) -> Option<(usize, usize)> {
    let n = region.len();
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 1..n {
        let inside = i < n - 1 && region[i] == Region::Unconstrained;
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if !matches!(best, Some((a, b)) if i - s <= b - a) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

/// Maps the unconstrained part of a primal solution to dual coordinates,
/// ordered by increasing `y`.
pub fn to_dual(solution: &ValueSolution) -> Result<DualSolution> {
    let (a, b) = unconstrained_run(&solution.region)
        .ok_or_else(|| Error::Dual("no unconstrained interior nodes".into()))?;
    if b - a < 2 {
        return Err(Error::Dual(format!(
            "unconstrained run [{a}, {b}) too short to form derivatives"
        )));
    }
    let x = solution.x();
    let bad: Vec<usize> = (a..b)
        .filter(|&i| {
            !(solution.dv[i] > 0.0 && solution.d2v[i] < 0.0)
                || (i + 1 < b && solution.dv[i + 1] >= solution.dv[i])
        })
        .collect();
    if !bad.is_empty() {
        return Err(Error::Dual(format!(
            "V' not positive and strictly decreasing at nodes {bad:?}"
        )));
    }
    let idx: Vec<usize> = (a..b).rev().collect();
    Ok(DualSolution {
        y: idx.iter().map(|&i| solution.dv[i]).collect(),
        v_dual: idx
            .iter()
            .map(|&i| solution.v[i] - x[i] * solution.dv[i])
            .collect(),
        dv_dual: idx.iter().map(|&i| -x[i]).collect(),
        d2v_dual: idx.iter().map(|&i| -1.0 / solution.d2v[i]).collect(),
        h: idx.iter().map(|&i| x[i]).collect(),
        j: idx.iter().map(|&i| solution.v[i]).collect(),
    })
}

/// Sup-norm residual of the dual ODE at interior dual nodes, with `v'` and
/// `v''` from three-point differences of `v_dual`, scaled by
/// `delta * max |v|`.
pub fn dual_residual(
    dual: &DualSolution,
    market: &MarketParams,
    utility: &UtilityModel,
) -> Result<f64> {
    let n = dual.len();
    if n < 3 {
        return Err(Error::Dual(
            "dual residual needs at least three nodes".into(),
        ));
    }
    let theta = market.theta();
    let y = &dual.y;
    let v = &dual.v_dual;
    let mut sup = 0.0_f64;
    for i in 1..n - 1 {
        let st = Stencil::at(y, i);
        let d1 = Stencil::apply(st.first(), v, i);
        let d2 = Stencil::apply(st.second(), v, i);
        let p = dual_p(utility, -d1, y[i])?.p;
        let res =
            market.delta * (v[i] - y[i] * d1) - theta * y[i] * y[i] * d2 - p + market.r * d1 * y[i];
        sup = sup.max(res.abs());
    }
    let scale = market.delta * v.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    Ok(if scale > 0.0 { sup / scale } else { sup })
}

/// `v''` from the dual ODE given `(y, v, v')`.
fn dual_second(
    market: &MarketParams,
    utility: &UtilityModel,
    y: f64,
    v: f64,
    dv: f64,
) -> Result<f64> {
    if !(-dv > 0.0) {
        return Err(Error::DualIntegration {
            y,
            reason: format!("wealth H = {} left (0, inf)", -dv),
        });
    }
    let p = dual_p(utility, -dv, y)?.p;
    let theta = market.theta();
    Ok((market.delta * (v - y * dv) - p + market.r * dv * y) / (theta * y * y))
}

const OVERFLOW_GUARD: f64 = 1e150;
const RTOL: f64 = 1e-9;
const ATOL: f64 = 1e-14;

/// Integrates the dual ODE from `y_start` to `y_end` (either direction) with
/// an adaptive Dormand-Prince 5(4) pair, returning the accepted steps.
pub fn integrate_dual(
    market: &MarketParams,
    utility: &UtilityModel,
    y_start: f64,
    v_start: f64,
    dv_start: f64,
    y_end: f64,
) -> Result<DualSolution> {
    market.check()?;
    if !(y_start > 0.0 && y_end > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dual integration needs positive endpoints (got {y_start}, {y_end})"
        )));
    }
    let rhs = |y: f64, s: [f64; 2]| -> Result<[f64; 2]> {
        let d2 = dual_second(market, utility, y, s[0], s[1])?;
        if !d2.is_finite() || d2.abs() > OVERFLOW_GUARD {
            return Err(Error::DualIntegration {
                y,
                reason: format!("v'' = {d2:e} overflowed"),
            });
        }
        Ok([s[1], d2])
    };

    let mut ys = vec![y_start];
    let mut vs = vec![v_start];
    let mut dvs = vec![dv_start];
    let mut d2vs = vec![dual_second(market, utility, y_start, v_start, dv_start)?];
    if y_end == y_start {
        return Ok(DualSolution::from_dual_samples(ys, vs, dvs, d2vs));
    }

    // Dormand-Prince coefficients
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let span = y_end - y_start;
    let dir = span.signum();
    let mut y = y_start;
    let mut s = [v_start, dv_start];
    let mut h = span * 1e-4;
    let h_min = span.abs() * 1e-14;
    while (y_end - y) * dir > 0.0 {
        if (y + h - y_end) * dir > 0.0 {
            h = y_end - y;
        }
        let mut k = [[0.0; 2]; 7];
        for stage in 0..7 {
            let mut st = s;
            for (prev, a) in A[stage].iter().enumerate().take(stage) {
                st[0] += h * a * k[prev][0];
                st[1] += h * a * k[prev][1];
            }
            k[stage] = rhs(y + C[stage] * h, st)?;
        }
        let mut next = s;
        let mut err = 0.0_f64;
        for comp in 0..2 {
            let hi: f64 = (0..7).map(|j| B5[j] * k[j][comp]).sum();
            let lo: f64 = (0..7).map(|j| B4[j] * k[j][comp]).sum();
            next[comp] = s[comp] + h * hi;
            let tol = ATOL + RTOL * s[comp].abs().max(next[comp].abs());
            err = err.max((h * (hi - lo)).abs() / tol);
        }
        if err <= 1.0 {
            y += h;
            s = next;
            ys.push(y);
            vs.push(s[0]);
            dvs.push(s[1]);
            d2vs.push(k[6][1]);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h.abs() < h_min {
            return Err(Error::DualIntegration {
                y,
                reason: "step size underflow".into(),
            });
        }
    }
    if dir < 0.0 {
        ys.reverse();
        vs.reverse();
        dvs.reverse();
        d2vs.reverse();
    }
    Ok(DualSolution::from_dual_samples(ys, vs, dvs, d2vs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::MertonSolution;

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

    fn merton_dual(n: usize) -> DualSolution {
        let s = MertonSolution::new(&market(), 0.5).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|k| 10f64.powf(-1.0 + 2.0 * k as f64 / (n - 1) as f64))
            .collect();
        let parts: Vec<(f64, f64, f64)> = y.iter().map(|&y| s.dual(y)).collect();
        DualSolution::from_dual_samples(
            y,
            parts.iter().map(|p| p.0).collect(),
            parts.iter().map(|p| p.1).collect(),
            parts.iter().map(|p| p.2).collect(),
        )
    }

    #[test]
    fn merton_dual_residual_is_small_and_detects_perturbation() {
        let u = UtilityModel::crra_consumption(0.5);
        let d = merton_dual(20_000);
        let base = dual_residual(&d, &market(), &u).unwrap();
        assert!(base <= 1e-6, "{base:e}");
        let mut bumped = d.clone();
        bumped.v_dual.iter_mut().for_each(|v| *v *= 1.01);
        let pert = dual_residual(&bumped, &market(), &u).unwrap();
        assert!(pert > 10.0 * base, "{pert:e} vs {base:e}");
    }

    #[test]
    fn integration_tracks_closed_form_both_ways() {
        let u = UtilityModel::crra_consumption(0.5);
        let s = MertonSolution::new(&market(), 0.5).unwrap();
        let (v0, d0, _) = s.dual(1.0);
        for y_end in [3.0, 0.3] {
            let br = integrate_dual(&market(), &u, 1.0, v0, d0, y_end).unwrap();
            for i in 0..br.len() {
                let (v, dv, _) = s.dual(br.y[i]);
                assert!(
                    (br.v_dual[i] - v).abs() <= 1e-6 * v.abs(),
                    "y = {}",
                    br.y[i]
                );
                assert!((br.dv_dual[i] - dv).abs() <= 1e-6 * dv.abs());
            }
            assert!(br.y.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn zero_length_branch_is_identity() {
        let u = UtilityModel::crra_consumption(0.5);
        let br = integrate_dual(&market(), &u, 1.0, 2.0, -3.0, 1.0).unwrap();
        assert_eq!(br.len(), 1);
        assert_eq!((br.v_dual[0], br.dv_dual[0], br.h[0]), (2.0, -3.0, 3.0));
    }

    #[test]
    fn negative_wealth_is_rejected() {
        let u = UtilityModel::crra_consumption(0.5);
        let s = MertonSolution::new(&market(), 0.5).unwrap();
        let (v0, d0, _) = s.dual(1.0);
        // a slope that makes v' rise through zero as y grows
        let err = integrate_dual(&market(), &u, 1.0, v0, 0.05 * d0, 100.0).unwrap_err();
        assert!(matches!(err, Error::DualIntegration { .. }), "{err}");
    }
}
