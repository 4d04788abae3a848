use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Log,
    Uniform,
}

/// Grid parameters as they appear in a problem config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Number of intervals; the grid has `n + 1` nodes.
    pub n: usize,
    pub x_max: f64,
    /// Defaults to `1e-4 * x_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn build(&self) -> Result<WealthGrid> {
        let x_min = self.x_min.unwrap_or(1e-4 * self.x_max);
        WealthGrid::new(x_min, self.x_max, self.n, self.spacing)
    }
}

/// Strictly increasing wealth nodes `x_0 = x_min, ..., x_n = x_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthGrid {
    nodes: Vec<f64>,
    spacing: Spacing,
}

pub const MIN_INTERVALS: usize = 200;

impl WealthGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize, spacing: Spacing) -> Result<Self> {
        if n < MIN_INTERVALS {
            return Err(Error::Grid(format!(
                "need at least {MIN_INTERVALS} intervals, got {n}"
            )));
        }
        if !(x_min > 0.0 && x_max.is_finite() && x_min <= 1e-4 * x_max * (1.0 + 1e-12)) {
            return Err(Error::Grid(format!(
                "need 0 < x_min <= 1e-4 x_max (x_min = {x_min}, x_max = {x_max})"
            )));
        }
        let nodes: Vec<f64> = match spacing {
            Spacing::Log => {
                let (a, b) = (x_min.ln(), x_max.ln());
                (0..=n)
                    .map(|i| match i {
                        0 => x_min,
                        _ if i == n => x_max,
                        _ => (a + (b - a) * i as f64 / n as f64).exp(),
                    })
                    .collect()
            }
            Spacing::Uniform => (0..=n)
                .map(|i| match i {
                    0 => x_min,
                    _ if i == n => x_max,
                    _ => x_min + (x_max - x_min) * i as f64 / n as f64,
                })
                .collect(),
        };
        Self::from_nodes_with(nodes, spacing)
    }

    pub fn log(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        Self::new(x_min, x_max, n, Spacing::Log)
    }

    /// Arbitrary strictly increasing nodes (at least three).
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        Self::from_nodes_with(nodes, Spacing::Uniform)
    }

    fn from_nodes_with(nodes: Vec<f64>, spacing: Spacing) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::Grid("need at least three nodes".into()));
        }
        if nodes[0] <= 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid(
                "nodes must be positive and strictly increasing".into(),
            ));
        }
        Ok(WealthGrid { nodes, spacing })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn x_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Index `i` with `nodes[i] <= x <= nodes[i + 1]`.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.x_min() && x <= self.x_max()) {
            return None;
        }
        let i = self.nodes.partition_point(|&v| v <= x);
        Some(i.saturating_sub(1).min(self.nodes.len() - 2))
    }

    /// The same nodes continued with the last cell size (ratio for log
    /// spacing) until the upper end is at least doubled, so the original
    /// nodes are a prefix of the extended grid.
    pub fn with_doubled_x_max(&self) -> Result<Self> {
        let n = self.nodes.len();
        let (prev, last) = (self.nodes[n - 2], self.nodes[n - 1]);
        let mut nodes = self.nodes.clone();
        let mut k = 1;
        loop {
            let x = match self.spacing {
                Spacing::Log => last * (last / prev).powi(k),
                Spacing::Uniform => last + (last - prev) * k as f64,
            };
            nodes.push(x);
            if x >= 2.0 * last {
                break;
            }
            k += 1;
        }
        Self::from_nodes_with(nodes, self.spacing)
    }
}
