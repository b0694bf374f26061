//! Density-based clustering of point streams on a fixed decimal grid.
//!
//! Points are projected onto integer tiles; tiles that collect enough
//! points within the window of interest are significant; adjacent
//! significant tiles form clusters. That contraction makes both the batch
//! and the streaming variant single-pass, with memory bound by the number
//! of occupied tiles rather than the number of points.
//!
//! Two entry levels are offered:
//!
//! * [`batch::raster`] clusters a finite point set in one call.
//! * [`pipeline::run_pipeline`] wires projection, windowed accumulation,
//!   and clustering into a threaded dataflow over a period-stamped stream,
//!   emitting one cluster snapshot per elapsed period.
//!
//! The individual node state machines in [`stream`] are public and can be
//! driven synchronously when thread-per-stage is not wanted.
//!
//! ```
//! use sraster::batch::{raster, BatchParams};
//! use sraster::grid::{GeoPoint, Metric, Precision};
//!
//! let mut points = Vec::new();
//! for i in 0..5 {
//!     points.push(GeoPoint::new(0.00004, 0.00001 * i as f64)); // tile (0, 0)
//!     points.push(GeoPoint::new(0.00012, 0.00001 * i as f64)); // tile (1, 0)
//! }
//! let params = BatchParams::new(
//!     Precision::new(4)?,
//!     4,                  // tile is significant at four points
//!     Metric::default(),  // the eight surrounding tiles are adjacent
//!     2,                  // clusters need at least two tiles
//! )?;
//! let clusters = raster(points, &params)?;
//! assert_eq!(clusters.len(), 1);
//! assert_eq!(clusters[0].len(), 2);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod batch;
pub mod generate;
pub mod grid;
pub mod ingest;
pub mod pipeline;
pub mod stream;

pub use batch::{raster, raster_prime, BatchParams, PointCluster, TileCluster};
pub use grid::{GeoPoint, Metric, MetricKind, Precision, Tile};
pub use pipeline::{run_pipeline, LatePolicy, PipelineConfig, PipelineError, PipelineReport};
pub use stream::{ClusterRow, PeriodId, SignificanceUpdate, StreamRecord};
