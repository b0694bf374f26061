//! Threaded dataflow wiring the projection, accumulation, and clustering
//! nodes into one streaming topology.
//!
//! A source thread normalizes the record stream, stamps period punctuation,
//! and deals records round-robin to the projection workers. Each projection
//! worker routes its output to an accumulator picked by a stable hash of
//! the tile, so every tile has exactly one owner regardless of worker
//! counts. Accumulators forward significance updates to a single clustering
//! driver that labels each period once all partitions have finished it.
//!
//! ```text
//! source ──> pi(0..num_pi) ──> alpha(0..num_alpha) ──> kappa ──> rows
//! ```
//!
//! Period punctuation is broadcast through every edge. An accumulator only
//! consumes a record once every projection worker has punctuated at least
//! that record's period, which restores a globally non-decreasing period
//! order without any cross-worker locking. The clustering driver holds each
//! partition's updates in per-partition segments and applies a period's
//! segments only when [`BarrierState`] reports the period safe, so the
//! labelled output is identical for every worker-count choice.

mod barrier;
mod workers;

use std::thread::JoinHandle;

use crossbeam_channel::{bounded, Receiver, Sender};
use thiserror::Error;

use crate::batch::BatchParams;
use crate::grid::Tile;
use crate::stream::alpha::WindowParams;
use crate::stream::kappa::KappaParams;
use crate::stream::{ClusterRow, StreamRecord};

pub use barrier::{BarrierError, BarrierState};

use workers::{AlphaMsg, KappaMsg, SourceMsg, WorkerStats};

/// What to do with records whose period is older than one already emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LatePolicy {
    /// Discard late records and count them.
    #[default]
    Drop,
    /// Hold the newest two periods back so records up to one period late
    /// slot into place; anything older is discarded and counted.
    DelayOnePeriod,
}

/// Topology and parameter choices for [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Projection worker count.
    pub num_pi: usize,
    /// Accumulator partition count.
    pub num_alpha: usize,
    /// Grid and clustering parameters shared with the batch kernel.
    pub params: BatchParams,
    /// Sliding window length in periods.
    pub window_len: u32,
    /// Carry original coordinates through to the output rows.
    pub retain_points: bool,
    pub late_policy: LatePolicy,
    /// Bound of every internal channel.
    pub channel_capacity: usize,
}

impl PipelineConfig {
    /// Single-worker topology with a 1024-message channel bound and the
    /// drop policy for late records.
    pub fn new(params: BatchParams, window_len: u32) -> Self {
        PipelineConfig {
            num_pi: 1,
            num_alpha: 1,
            params,
            window_len,
            retain_points: false,
            late_policy: LatePolicy::Drop,
            channel_capacity: 1024,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("{stage} stage failed: {message}")]
    Stage { stage: &'static str, message: String },
}

/// Drop and error counters accumulated across all workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PipelineReport {
    /// Records discarded by the late policy.
    pub late_dropped: u64,
    /// Records rejected by projection (non-finite or out of range).
    pub invalid_dropped: u64,
}

/// Stable accumulator choice for a tile.
///
/// Uses a fixed bit mixer rather than the standard library hasher so the
/// assignment never varies across runs, processes, or platforms.
pub fn partition_key(tile: Tile, num_alpha: usize) -> usize {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let h = mix((tile.xp as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ mix(tile.yp as u64));
    (h % num_alpha as u64) as usize
}

/// Handle over a running pipeline: an iterator of labelled rows plus a
/// [`finish`](PipelineOutput::finish) call that joins the workers.
///
/// Rows arrive in period order as soon as each period is complete. Dropping
/// the handle early shuts the workers down without blocking on unread rows.
pub struct PipelineOutput {
    rows: Option<Receiver<ClusterRow>>,
    handles: Vec<(&'static str, JoinHandle<Result<WorkerStats, String>>)>,
}

impl Iterator for PipelineOutput {
    type Item = ClusterRow;

    fn next(&mut self) -> Option<ClusterRow> {
        self.rows.as_ref()?.recv().ok()
    }
}

impl PipelineOutput {
    /// Waits for every worker to exit and reports the aggregate drop
    /// counters, or the first stage failure in topological order.
    pub fn finish(mut self) -> Result<PipelineReport, PipelineError> {
        // Closing the row channel unblocks the clustering driver if the
        // caller stopped reading early; the disconnect then cascades
        // upstream through the worker channels.
        self.rows = None;
        let mut report = PipelineReport::default();
        let mut failure: Option<PipelineError> = None;
        for (stage, handle) in self.handles.drain(..) {
            let outcome = match handle.join() {
                Ok(Ok(stats)) => {
                    report.late_dropped += stats.late_dropped;
                    report.invalid_dropped += stats.invalid_dropped;
                    continue;
                }
                Ok(Err(message)) => PipelineError::Stage { stage, message },
                Err(_) => PipelineError::Stage {
                    stage,
                    message: "worker panicked".into(),
                },
            };
            failure.get_or_insert(outcome);
        }
        match failure {
            Some(err) => Err(err),
            None => Ok(report),
        }
    }
}

impl Drop for PipelineOutput {
    fn drop(&mut self) {
        self.rows = None;
        for (_, handle) in self.handles.drain(..) {
            let _ = handle.join();
        }
    }
}

/// Runs the streaming topology over `source` and returns the row stream.
///
/// The source iterator is moved onto a dedicated thread, so an unbounded
/// input works as long as the caller keeps consuming rows. Rows for period
/// `p` are emitted once every accumulator has seen punctuation past `p`.
pub fn run_pipeline<I>(config: PipelineConfig, source: I) -> Result<PipelineOutput, PipelineError>
where
    I: IntoIterator<Item = StreamRecord>,
    I::IntoIter: Send + 'static,
{
    if config.num_pi == 0 {
        return Err(PipelineError::Config("num_pi must be at least 1".into()));
    }
    if config.num_alpha == 0 {
        return Err(PipelineError::Config("num_alpha must be at least 1".into()));
    }
    if config.channel_capacity == 0 {
        return Err(PipelineError::Config(
            "channel_capacity must be at least 1".into(),
        ));
    }
    let window =
        WindowParams::new(config.params.tau(), config.window_len).map_err(|err| {
            PipelineError::Config(err.to_string())
        })?;
    let kappa_params = KappaParams::new(
        config.params.mu(),
        config.params.metric(),
        config.params.prec(),
    )
    .map_err(|err| PipelineError::Config(err.to_string()))?;

    let cap = config.channel_capacity;
    let (pi_txs, pi_rxs): (Vec<Sender<SourceMsg>>, Vec<Receiver<SourceMsg>>) =
        (0..config.num_pi).map(|_| bounded(cap)).unzip();
    let (alpha_txs, alpha_rxs): (Vec<Sender<AlphaMsg>>, Vec<Receiver<AlphaMsg>>) =
        (0..config.num_alpha).map(|_| bounded(cap)).unzip();
    let (kappa_tx, kappa_rx) = bounded::<KappaMsg>(cap);
    let (row_tx, row_rx) = bounded::<ClusterRow>(cap);

    let mut handles: Vec<(&'static str, JoinHandle<Result<WorkerStats, String>>)> = Vec::new();

    let policy = config.late_policy;
    let iter = source.into_iter();
    handles.push((
        "source",
        std::thread::spawn(move || workers::run_source(iter, pi_txs, policy)),
    ));

    for (pi_id, rx) in pi_rxs.into_iter().enumerate() {
        let txs = alpha_txs.clone();
        let prec = config.params.prec();
        let retain = config.retain_points;
        handles.push((
            "projection",
            std::thread::spawn(move || workers::run_pi(pi_id, prec, retain, rx, txs)),
        ));
    }
    drop(alpha_txs);

    for (alpha_id, rx) in alpha_rxs.into_iter().enumerate() {
        let tx = kappa_tx.clone();
        let retain = config.retain_points;
        let num_pi = config.num_pi;
        handles.push((
            "accumulator",
            std::thread::spawn(move || {
                workers::run_alpha(alpha_id, num_pi, window, retain, rx, tx)
            }),
        ));
    }
    drop(kappa_tx);

    let num_alpha = config.num_alpha;
    let retain = config.retain_points;
    let window_len = config.window_len;
    handles.push((
        "clustering",
        std::thread::spawn(move || {
            workers::run_kappa(kappa_params, window_len, retain, num_alpha, kappa_rx, row_tx)
        }),
    ));

    Ok(PipelineOutput {
        rows: Some(row_rx),
        handles,
    })
}
