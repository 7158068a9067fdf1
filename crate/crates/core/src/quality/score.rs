use serde::{Deserialize, Serialize};

use super::{build_transport, emd_exact, QualityError};
use crate::netchan::NetworkConditions;
use crate::surface::{DeviationMap, Grid, GridSpec};

/// Transport instances above this many arcs are refused.
pub const MAX_ARCS: usize = 1_000_000;
/// Default coarsening target: the longer grid side is reduced to at most this
/// many blocks.
pub const DEFAULT_MAX_SIDE: usize = 32;

/// Flatness score of a finished surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductQuality {
    /// Work to flatten, divided by the total removed mass when known (mm).
    pub emd: f64,
    /// Raw optimal transport work, mass x mm.
    pub work: f64,
    pub grid_dims: (usize, usize),
    pub tool_radius: f64,
    pub conditions: NetworkConditions,
}

impl ProductQuality {
    pub fn with_provenance(mut self, tool_radius: f64, conditions: NetworkConditions) -> Self {
        self.tool_radius = tool_radius;
        self.conditions = conditions;
        self
    }

    /// `tool_radius,delay_ms,jitter_ms,loss,emd`
    pub fn table_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.tool_radius,
            self.conditions.delay_ms,
            self.conditions.jitter_ms,
            self.conditions.loss,
            self.emd
        )
    }
}

pub const QUALITY_HEADER: &str = "tool_radius,delay_ms,jitter_ms,loss,emd";

/// Downsampling factor that brings the longer side to at most `max_side`.
pub fn auto_downsample(spec: &GridSpec, max_side: usize) -> usize {
    spec.width.max(spec.height).div_ceil(max_side.max(1)).max(1)
}

/// Sums `factor` x `factor` blocks. Signed mass is preserved exactly up to
/// rounding; cell size grows by `factor`.
pub fn block_sum(grid: &Grid, factor: usize) -> Grid {
    let spec = grid.spec;
    let w = spec.width.div_ceil(factor);
    let h = spec.height.div_ceil(factor);
    let out_spec = GridSpec {
        width: w,
        height: h,
        cell_size: spec.cell_size * factor as f64,
        origin: spec.origin,
    };
    let mut out = Grid::zeros(out_spec);
    for r in 0..spec.height {
        for c in 0..spec.width {
            *out.get_mut(c / factor, r / factor) += grid.get(c, r);
        }
    }
    out
}

/// Coarsens the deviation map by `downsample`, solves the transport problem
/// exactly and normalizes by the removed mass.
pub fn score_product(dev: &DeviationMap, downsample: usize) -> Result<ProductQuality, QualityError> {
    if downsample == 0 {
        return Err(QualityError::InvalidDownsample);
    }
    let coarse = if downsample == 1 {
        dev.grid.clone()
    } else {
        block_sum(&dev.grid, downsample)
    };
    let dims = (coarse.width(), coarse.height());
    let coarse_dev = DeviationMap {
        grid: coarse,
        window: dev.window,
        reference_mass: dev.reference_mass,
    };
    let inst = build_transport(&coarse_dev);
    if inst.arcs() > MAX_ARCS {
        return Err(QualityError::TooLarge {
            arcs: inst.arcs(),
            limit: MAX_ARCS,
        });
    }
    let work = emd_exact(&inst)?;
    let emd = if dev.reference_mass > 0.0 {
        work / dev.reference_mass
    } else {
        work
    };
    Ok(ProductQuality {
        emd,
        work,
        grid_dims: dims,
        tool_radius: 0.0,
        conditions: NetworkConditions::ideal(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_scores_zero() {
        let spec = GridSpec::new(10, 10, 1.0).unwrap();
        let dev = DeviationMap::from_grid(Grid::zeros(spec), 3);
        let q = score_product(&dev, 1).unwrap();
        assert_eq!(q.emd, 0.0);
        assert_eq!(q.work, 0.0);
    }

    #[test]
    fn block_sum_preserves_mass() {
        let spec = GridSpec::new(7, 5, 1.0).unwrap();
        let data: Vec<f64> = (0..35).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = Grid::from_rows(spec, data).unwrap();
        let b = block_sum(&g, 3);
        assert_eq!((b.width(), b.height()), (3, 2));
        assert_eq!(b.spec.cell_size, 3.0);
        assert!((b.sum() - g.sum()).abs() < 1e-12);
    }

    #[test]
    fn auto_downsample_targets_side() {
        let spec = GridSpec::new(200, 100, 1.0).unwrap();
        assert_eq!(auto_downsample(&spec, 32), 7);
        assert_eq!(auto_downsample(&GridSpec::new(32, 8, 1.0).unwrap(), 32), 1);
    }

    #[test]
    fn guard_refuses_huge_instances() {
        let spec = GridSpec::new(60, 60, 1.0).unwrap();
        let data: Vec<f64> = (0..3600)
            .map(|i| if (i / 60 + i % 60) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let dev = DeviationMap::from_grid(Grid::from_rows(spec, data).unwrap(), 3);
        assert!(matches!(
            score_product(&dev, 1),
            Err(QualityError::TooLarge { .. })
        ));
        assert!(matches!(
            score_product(&dev, 0),
            Err(QualityError::InvalidDownsample)
        ));
    }

    #[test]
    fn quality_row_format() {
        let q = ProductQuality {
            emd: 1.25,
            work: 3.0,
            grid_dims: (2, 2),
            tool_radius: 12.5,
            conditions: NetworkConditions {
                delay_ms: 40.0,
                jitter_ms: 2.0,
                loss: 0.01,
                ..NetworkConditions::ideal()
            },
        };
        assert_eq!(q.table_row(), "12.5,40,2,0.01,1.25");
    }
}
