use serde::{Deserialize, Serialize};

use super::QualityError;
use crate::surface::DeviationMap;

/// A supply or demand location with its mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub col: usize,
    pub row: usize,
    pub mass: f64,
}

/// Balanced transportation problem over grid cells. Ground distance is the
/// Euclidean distance between cell centers, in millimeters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TransportInstance {
    pub supplies: Vec<Site>,
    pub demands: Vec<Site>,
    pub cell_size: f64,
}

impl TransportInstance {
    pub fn new(supplies: Vec<Site>, demands: Vec<Site>, cell_size: f64) -> Self {
        Self {
            supplies,
            demands,
            cell_size,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.supplies.is_empty() && self.demands.is_empty()
    }

    pub fn total_supply(&self) -> f64 {
        self.supplies.iter().map(|s| s.mass).sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.demands.iter().map(|s| s.mass).sum()
    }

    pub fn arcs(&self) -> usize {
        self.supplies.len() * self.demands.len()
    }

    pub fn distance(&self, a: &Site, b: &Site) -> f64 {
        let dc = a.col as f64 - b.col as f64;
        let dr = a.row as f64 - b.row as f64;
        self.cell_size * dc.hypot(dr)
    }

    /// Both sides swapped.
    pub fn reversed(&self) -> Self {
        Self {
            supplies: self.demands.clone(),
            demands: self.supplies.clone(),
            cell_size: self.cell_size,
        }
    }

    /// Checks masses and the mass balance (relative tolerance 1e-9).
    pub fn validate(&self) -> Result<(), QualityError> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(QualityError::InvalidCellSize(self.cell_size));
        }
        for s in self.supplies.iter().chain(&self.demands) {
            if !(s.mass.is_finite() && s.mass > 0.0) {
                return Err(QualityError::NonPositiveMass(s.mass));
            }
        }
        let supply = self.total_supply();
        let demand = self.total_demand();
        if (supply - demand).abs() > 1e-9 * supply.max(demand).max(1.0) {
            return Err(QualityError::Unbalanced { supply, demand });
        }
        Ok(())
    }
}

/// Splits a deviation map into bumps (supply) and pits (demand). When the two
/// totals differ, as with a local averaging window, both sides are rescaled
/// to the mean of the two totals.
pub fn build_transport(dev: &DeviationMap) -> TransportInstance {
    let g = &dev.grid;
    let mut supplies = Vec::new();
    let mut demands = Vec::new();
    for row in 0..g.height() {
        for col in 0..g.width() {
            let v = g.get(col, row);
            if v > 0.0 {
                supplies.push(Site { col, row, mass: v });
            } else if v < 0.0 {
                demands.push(Site { col, row, mass: -v });
            }
        }
    }
    let mut inst = TransportInstance::new(supplies, demands, g.spec.cell_size);
    let (s, d) = (inst.total_supply(), inst.total_demand());
    if s == 0.0 || d == 0.0 {
        // one-sided maps cannot be flattened by moving material; nothing to do
        return TransportInstance::new(Vec::new(), Vec::new(), g.spec.cell_size);
    }
    if s != d {
        let mean = 0.5 * (s + d);
        inst.supplies.iter_mut().for_each(|x| x.mass *= mean / s);
        inst.demands.iter_mut().for_each(|x| x.mass *= mean / d);
    }
    inst
}
