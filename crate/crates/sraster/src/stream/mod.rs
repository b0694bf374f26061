//! Streaming node state machines and the messages they exchange.
//!
//! Three roles cooperate, wired together by [`crate::pipeline`]:
//!
//! * projection nodes ([`pi`]) map raw points to tiles, statelessly
//! * accumulation nodes ([`alpha`]) keep sliding-window tile counts and
//!   emit significance transitions
//! * the clustering node ([`kappa`]) maintains the significant set and
//!   turns it into labelled clusters once per completed period
//!
//! The nodes are plain synchronous state machines so they can be driven
//! directly in tests; all threading lives in the pipeline layer.

pub mod alpha;
pub mod kappa;
pub mod pi;

pub use alpha::{AlphaError, AlphaNode, PrimeAlphaNode, WindowParams};
pub use kappa::{KappaError, KappaNode, KappaParams};
pub use pi::PiNode;

use crate::grid::{GeoPoint, Tile};

/// Identifier of one fixed-length time interval. Consecutive intervals get
/// consecutive ids; ingestion only ever produces non-negative ones.
pub type PeriodId = i64;

/// A period-stamped input point, ready for projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamRecord {
    pub point: GeoPoint,
    pub period: PeriodId,
}

impl StreamRecord {
    pub fn new(point: GeoPoint, period: PeriodId) -> Self {
        StreamRecord { point, period }
    }
}

/// A projected record on its way from a projection node to an accumulator.
/// `point` is carried only when the stream retains originals for output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedRecord {
    pub tile: Tile,
    pub period: PeriodId,
    pub point: Option<GeoPoint>,
}

/// State transition sent from an accumulator to the clustering node.
#[derive(Debug, Clone, PartialEq)]
pub enum SignificanceUpdate {
    /// The tile's in-window count just reached the significance threshold.
    Add(Tile),
    /// The tile's in-window count just dropped below the threshold.
    Remove(Tile),
    /// The named period is complete on this accumulator; cluster now.
    Recluster(PeriodId),
    /// Original points retained for a significant tile, tagged with the
    /// period they arrived in so the receiver can expire them with the
    /// window. Sent after `Add` with the backlog (one message per backlog
    /// period), then once per later point.
    Points {
        tile: Tile,
        period: PeriodId,
        points: Vec<GeoPoint>,
    },
}

/// One output row: a clustered tile (and, when points are retained, one
/// member point) for a completed period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterRow {
    pub period: PeriodId,
    pub cluster_id: u32,
    /// Tile corner mapped back to input coordinates.
    pub x: f64,
    pub y: f64,
    /// Original member point, present only when points are retained.
    pub point: Option<GeoPoint>,
}
