//! Product quality as the exact earth mover's distance needed to flatten the
//! deviation map: bumps are supplies, pits are demands.

mod mincost;
mod score;
mod transport;

use thiserror::Error;

pub use mincost::{emd_exact, solve_transport, TransportPlan};
pub use score::{
    auto_downsample, block_sum, score_product, ProductQuality, DEFAULT_MAX_SIDE, MAX_ARCS, QUALITY_HEADER,
};
pub use transport::{build_transport, Site, TransportInstance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QualityError {
    #[error("unbalanced transport instance: supply {supply}, demand {demand}")]
    Unbalanced { supply: f64, demand: f64 },
    #[error("site mass must be positive and finite, got {0}")]
    NonPositiveMass(f64),
    #[error("invalid cell size {0}")]
    InvalidCellSize(f64),
    #[error("downsample factor must be at least 1")]
    InvalidDownsample,
    #[error("transport instance has {arcs} arcs, limit is {limit}; increase downsampling")]
    TooLarge { arcs: usize, limit: usize },
}
