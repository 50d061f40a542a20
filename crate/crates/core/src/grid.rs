use serde::Serialize;

use crate::error::{domain, Result};

pub const DEFAULT_RHO_MAX: f64 = 16.0;
pub const DEFAULT_DRHO: f64 = 0.01;
const MIN_RHO_MAX: f64 = 10.0;
const MIN_INTERVALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Spacing {
    Uniform { h: f64 },
    Custom,
}

/// Nodes `0 = rho_0 < ... < rho_N = rho_max` on the half-line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    spacing: Spacing,
}

impl Default for RadialGrid {
    fn default() -> Self {
        RadialGrid::uniform(DEFAULT_RHO_MAX, DEFAULT_DRHO).expect("default grid is valid")
    }
}

impl RadialGrid {
    /// Uniform grid; `h` is adjusted so that `rho_max` is hit exactly.
    pub fn uniform(rho_max: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return domain(format!("grid spacing {h} must be positive"));
        }
        if !(rho_max.is_finite() && rho_max >= MIN_RHO_MAX) {
            return domain(format!("rho_max = {rho_max} must be at least {MIN_RHO_MAX}"));
        }
        let n = (rho_max / h).round() as usize;
        if n < MIN_INTERVALS {
            return domain(format!(
                "grid has {n} intervals; at least {MIN_INTERVALS} are required"
            ));
        }
        let h = rho_max / n as f64;
        let nodes = (0..=n).map(|i| if i == n { rho_max } else { i as f64 * h }).collect();
        Ok(RadialGrid { nodes, spacing: Spacing::Uniform { h } })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < MIN_INTERVALS + 1 {
            return domain(format!("grid needs at least {} nodes", MIN_INTERVALS + 1));
        }
        if nodes[0] != 0.0 {
            return domain("grid must start at rho = 0");
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || !nodes.iter().all(|x| x.is_finite()) {
            return domain("grid nodes must be finite and strictly increasing");
        }
        if *nodes.last().unwrap() < MIN_RHO_MAX {
            return domain(format!("rho_max must be at least {MIN_RHO_MAX}"));
        }
        Ok(RadialGrid { nodes, spacing: Spacing::Custom })
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

    pub fn rho_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Spacing of a uniform grid.
    pub fn step(&self) -> Option<f64> {
        match self.spacing {
            Spacing::Uniform { h } => Some(h),
            Spacing::Custom => None,
        }
    }

    /// Same spacing policy, `rho_max` doubled.
    pub fn doubled(&self) -> Result<Self> {
        match self.spacing {
            Spacing::Uniform { h } => RadialGrid::uniform(2.0 * self.rho_max(), h),
            Spacing::Custom => {
                let h = self.nodes[self.len() - 1] - self.nodes[self.len() - 2];
                let mut nodes = self.nodes.clone();
                let target = 2.0 * self.rho_max();
                let n_extra = ((target - self.rho_max()) / h).ceil() as usize;
                let start = self.rho_max();
                let step = (target - start) / n_extra as f64;
                nodes.extend((1..=n_extra).map(|k| start + k as f64 * step));
                RadialGrid::from_nodes(nodes)
            }
        }
    }
}
