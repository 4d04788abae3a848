//! Feedback controls `c*(x) = I(x, V')`, `pi*(x) = min(-(mu - r) V' / (sigma^2 V''), g(x))`
//! sampled on the grid, with monotone interpolation between nodes.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::hjb::{merton_candidate, Region, ValueSolution};
use crate::io::{write_table, OutputHeader, Table};
use crate::model::{ConstraintSpec, MarketParams, UtilityModel};
use crate::numerics::MonotoneCubic;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub x: Vec<f64>,
    pub c_star: Vec<f64>,
    /// Dollar amount in the risky asset.
    pub pi_star: Vec<f64>,
    /// Proportion `pi_star / x`.
    pub pi_bar: Vec<f64>,
    pub region: Vec<Region>,
    /// `g(x)` at the nodes.
    pub cap: Vec<f64>,
    c_interp: MonotoneCubic,
    pi_interp: MonotoneCubic,
}

impl PolicyTable {
    pub fn new(
        x: Vec<f64>,
        c_star: Vec<f64>,
        pi_star: Vec<f64>,
        region: Vec<Region>,
        cap: Vec<f64>,
    ) -> Result<Self> {
        let n = x.len();
        if n < 2
            || [c_star.len(), pi_star.len(), region.len(), cap.len()]
                .iter()
                .any(|&l| l != n)
        {
            return Err(Error::InvalidParameter(
                "policy columns must have equal length >= 2".into(),
            ));
        }
        if x[0] <= 0.0 || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid(
                "policy nodes must be positive and increasing".into(),
            ));
        }
        if c_star.iter().chain(&pi_star).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "policy values must be finite".into(),
            ));
        }
        let pi_bar = pi_star.iter().zip(&x).map(|(p, x)| p / x).collect();
        Ok(PolicyTable {
            c_interp: MonotoneCubic::new(x.clone(), c_star.clone()),
            pi_interp: MonotoneCubic::new(x.clone(), pi_star.clone()),
            x,
            c_star,
            pi_star,
            pi_bar,
            region,
            cap,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn c_interp(&self) -> &MonotoneCubic {
        &self.c_interp
    }

    pub fn pi_interp(&self) -> &MonotoneCubic {
        &self.pi_interp
    }

    /// Cap between nodes: the chord of `g`, which never exceeds a concave `g`.
    pub fn cap_at(&self, k: usize, x: f64) -> f64 {
        let (a, b) = (self.cap[k], self.cap[k + 1]);
        if a.is_infinite() || b.is_infinite() {
            return f64::INFINITY;
        }
        a + (b - a) * (x - self.x[k]) / (self.x[k + 1] - self.x[k])
    }

    /// Constrained nodes where `pi_bar` increases by more than `1e-12` of its scale.
    pub fn lemma1_violations(&self) -> Vec<usize> {
        let scale = self
            .pi_bar
            .iter()
            .zip(&self.region)
            .filter(|(_, r)| **r == Region::Constrained)
            .fold(0.0_f64, |a, (p, _)| a.max(p.abs()));
        (1..self.len())
            .filter(|&i| {
                self.region[i] == Region::Constrained && self.region[i - 1] == Region::Constrained
            })
            .filter(|&i| self.pi_bar[i] - self.pi_bar[i - 1] > 1e-12 * scale)
            .collect()
    }

    pub fn consumption_nondecreasing(&self) -> bool {
        self.c_star.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn write_csv<W: Write>(&self, w: W, header: Option<&OutputHeader>) -> Result<()> {
        write_table(
            w,
            header,
            &["x", "c", "pi", "pi_bar", "region"],
            self.len(),
            |r, c| match c {
                0 => self.x[r].to_string(),
                1 => self.c_star[r].to_string(),
                2 => self.pi_star[r].to_string(),
                3 => self.pi_bar[r].to_string(),
                _ => self.region[r].as_str().to_string(),
            },
        )
    }

    /// Reads a table written by [`PolicyTable::write_csv`]; caps are
    /// recomputed from `constraint`.
    pub fn read_csv<R: Read>(r: R, constraint: &ConstraintSpec) -> Result<Self> {
        let t = Table::read(r)?;
        let x = t.column_f64("x")?;
        let region = t
            .column("region")?
            .into_iter()
            .map(|s| {
                Region::parse(s)
                    .ok_or_else(|| Error::InvalidParameter(format!("bad region flag {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let cap = x.iter().map(|&x| constraint.g(x)).collect();
        Self::new(x, t.column_f64("c")?, t.column_f64("pi")?, region, cap)
    }
}

/// Feedback controls at every node of a converged solution.
pub fn extract_policy(
    solution: &ValueSolution,
    utility: &UtilityModel,
    market: &MarketParams,
    constraint: &ConstraintSpec,
) -> Result<PolicyTable> {
    let x = solution.x();
    let n = x.len();
    if let Some(i) = (1..n - 1).find(|&i| !(solution.d2v[i] < 0.0)) {
        return Err(Error::ConcavityLost {
            node: i,
            x: x[i],
            d2v: solution.d2v[i],
        });
    }
    let dv_max = solution.dv.iter().cloned().fold(0.0_f64, f64::max);
    let floor = if dv_max > 0.0 {
        1e-12 * dv_max
    } else {
        f64::MIN_POSITIVE
    };
    let cap: Vec<f64> = x.iter().map(|&x| constraint.g(x)).collect();
    let mut c = Vec::with_capacity(n);
    let mut pi = vec![0.0; n];
    let mut region = solution.region.clone();
    for i in 0..n {
        c.push(utility.inverse_marginal(x[i], solution.dv[i].max(floor))?);
        if solution.d2v[i] < 0.0 {
            pi[i] = merton_candidate(market, solution.dv[i].max(0.0), solution.d2v[i]).min(cap[i]);
        }
    }
    // flat closure at an end node: carry the neighbouring proportion over
    for (end, nb) in [(0, 1), (n - 1, n - 2)] {
        if !(solution.d2v[end] < 0.0) {
            let demand = pi[nb] / x[nb] * x[end];
            pi[end] = demand.min(cap[end]);
            region[end] = if demand >= cap[end] {
                Region::Constrained
            } else {
                Region::Unconstrained
            };
        }
    }
    let table = PolicyTable::new(x.to_vec(), c, pi, region, cap)?;
    if matches!(utility, UtilityModel::CrraConsumption { .. }) && !table.consumption_nondecreasing()
    {
        log::warn!("consumption is not nondecreasing in wealth");
    }
    Ok(table)
}

/// Interpolated `(c, pi)` at `x`, clamped to `c >= 0` and `0 <= pi <= g`.
pub fn policy_at(table: &PolicyTable, x: f64) -> Result<(f64, f64)> {
    let (lo, hi) = (table.x[0], table.x[table.len() - 1]);
    if !(x >= lo && x <= hi) {
        return Err(Error::OutOfRange { x, lo, hi });
    }
    let k = table.c_interp.locate(x);
    let c = table.c_interp.eval_in(k, x).max(0.0);
    let pi = table.pi_interp.eval_in(k, x).clamp(0.0, table.cap_at(k, x));
    Ok((c, pi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table() -> PolicyTable {
        let x: Vec<f64> = (0..50).map(|i| 0.1 * 1.1f64.powi(i)).collect();
        let c: Vec<f64> = x.iter().map(|x| 0.08 * x).collect();
        let pi: Vec<f64> = x.iter().map(|x| (3.5 * x).min(1.0)).collect();
        let region = pi
            .iter()
            .map(|&p| {
                if p >= 1.0 {
                    Region::Constrained
                } else {
                    Region::Unconstrained
                }
            })
            .collect();
        PolicyTable::new(x, c, pi, region, vec![1.0; 50]).unwrap()
    }

    #[test]
    fn nodes_are_reproduced_and_lines_interpolated() {
        let t = table();
        for i in 0..t.len() {
            let (c, p) = policy_at(&t, t.x[i]).unwrap();
            assert_eq!(c, t.c_star[i]);
            assert_eq!(p, t.pi_star[i]);
        }
        let mid = 0.5 * (t.x[3] + t.x[4]);
        let (c, _) = policy_at(&t, mid).unwrap();
        assert!((c - 0.08 * mid).abs() < 1e-14);
        assert!(policy_at(&t, 1e6).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = table();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, None).unwrap();
        let back = PolicyTable::read_csv(buf.as_slice(), &ConstraintSpec::constant(1.0)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn lemma1_on_constant_cap() {
        assert!(table().lemma1_violations().is_empty());
    }

    proptest! {
        #[test]
        fn interpolated_pi_respects_cap(u in 0.0f64..1.0) {
            let t = table();
            let x = t.x[0] + u * (t.x[t.len() - 1] - t.x[0]);
            let (c, p) = policy_at(&t, x).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p) && c >= 0.0);
        }
    }
}
