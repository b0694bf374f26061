//! Thread bodies for the streaming topology.
//!
//! Every worker exits in one of three ways: normally after the flush
//! protocol completes, quietly when a neighbor hangs up (the consumer
//! stopped reading, or another stage already failed and its channels
//! dropped), or with an error string when its own stage breaks a protocol
//! invariant. Only the last case surfaces from
//! [`finish`](super::PipelineOutput::finish); root causes are never masked
//! by the disconnects they cascade into.

use std::collections::{BTreeMap, VecDeque};

use crossbeam_channel::{Receiver, Sender};

use super::barrier::BarrierState;
use super::{partition_key, LatePolicy};
use crate::grid::Precision;
use crate::stream::alpha::WindowParams;
use crate::stream::kappa::{KappaNode, KappaParams};
use crate::stream::pi::PiNode;
use crate::stream::{
    AlphaNode, ClusterRow, PeriodId, PrimeAlphaNode, ProjectedRecord, SignificanceUpdate,
    StreamRecord,
};

/// Per-worker drop counters, merged by `finish`.
#[derive(Debug, Clone, Copy, Default)]
pub(super) struct WorkerStats {
    pub late_dropped: u64,
    pub invalid_dropped: u64,
}

/// A neighbor hung up; the worker stops without reporting an error.
struct Disconnected;

pub(super) enum SourceMsg {
    Record(StreamRecord),
    /// All records that follow (from this sender) belong to `0`'s period or
    /// later.
    Punct(PeriodId),
    Flush,
}

pub(super) enum AlphaMsg {
    Record {
        from_pi: usize,
        rec: ProjectedRecord,
    },
    Punct {
        from_pi: usize,
        period: PeriodId,
    },
    Flush {
        from_pi: usize,
    },
}

pub(super) enum KappaMsg {
    Update {
        from_alpha: usize,
        update: SignificanceUpdate,
    },
    Flush {
        from_alpha: usize,
    },
}

/// Normalizes the raw stream per the late policy, stamps punctuation on
/// every period change, and deals records round-robin across the
/// projection workers. Punctuation goes to every worker so each one can
/// relay the full period sequence downstream.
pub(super) fn run_source<I>(
    records: I,
    to_pi: Vec<Sender<SourceMsg>>,
    policy: LatePolicy,
) -> Result<WorkerStats, String>
where
    I: Iterator<Item = StreamRecord>,
{
    let mut stats = WorkerStats::default();
    let mut emitter = SourceEmitter {
        to_pi,
        next_worker: 0,
        last_period: None,
    };
    let run = |stats: &mut WorkerStats| -> Result<(), Disconnected> {
        match policy {
            LatePolicy::Drop => {
                let mut max: Option<PeriodId> = None;
                for rec in records {
                    if max.is_some_and(|m| rec.period < m) {
                        stats.late_dropped += 1;
                        continue;
                    }
                    max = Some(rec.period);
                    emitter.emit(rec)?;
                }
            }
            LatePolicy::DelayOnePeriod => {
                // Hold periods {max-1, max}; releasing a period only once
                // the stream is two periods past it lets records up to one
                // period late land in their own bucket.
                let mut held: BTreeMap<PeriodId, Vec<StreamRecord>> = BTreeMap::new();
                let mut max: Option<PeriodId> = None;
                for rec in records {
                    if max.is_some_and(|m| rec.period < m.saturating_sub(1)) {
                        stats.late_dropped += 1;
                        continue;
                    }
                    held.entry(rec.period).or_default().push(rec);
                    if max.is_none_or(|m| rec.period > m) {
                        max = Some(rec.period);
                        let boundary = rec.period.saturating_sub(1);
                        while held.first_key_value().is_some_and(|(p, _)| *p < boundary) {
                            let (_, batch) = held.pop_first().expect("key was just observed");
                            for rec in batch {
                                emitter.emit(rec)?;
                            }
                        }
                    }
                }
                for (_, batch) in held {
                    for rec in batch {
                        emitter.emit(rec)?;
                    }
                }
            }
        }
        emitter.flush()
    };
    // A disconnect means the pipeline is shutting down around us; the
    // stage that caused it reports the failure, if there was one.
    let _ = run(&mut stats);
    Ok(stats)
}

struct SourceEmitter {
    to_pi: Vec<Sender<SourceMsg>>,
    next_worker: usize,
    last_period: Option<PeriodId>,
}

impl SourceEmitter {
    fn emit(&mut self, rec: StreamRecord) -> Result<(), Disconnected> {
        if self.last_period != Some(rec.period) {
            self.last_period = Some(rec.period);
            for tx in &self.to_pi {
                tx.send(SourceMsg::Punct(rec.period))
                    .map_err(|_| Disconnected)?;
            }
        }
        let w = self.next_worker % self.to_pi.len();
        self.next_worker = self.next_worker.wrapping_add(1);
        self.to_pi[w]
            .send(SourceMsg::Record(rec))
            .map_err(|_| Disconnected)
    }

    fn flush(&self) -> Result<(), Disconnected> {
        for tx in &self.to_pi {
            tx.send(SourceMsg::Flush).map_err(|_| Disconnected)?;
        }
        Ok(())
    }
}

/// Projects records to tiles and routes each to the accumulator that owns
/// its tile. Punctuation and flush markers are relayed to every
/// accumulator, tagged with this worker's id so receivers can track each
/// upstream stream separately.
pub(super) fn run_pi(
    pi_id: usize,
    prec: Precision,
    retain_points: bool,
    inbox: Receiver<SourceMsg>,
    to_alpha: Vec<Sender<AlphaMsg>>,
) -> Result<WorkerStats, String> {
    let node = PiNode::new(prec, retain_points);
    let mut stats = WorkerStats::default();
    let num_alpha = to_alpha.len();
    while let Ok(msg) = inbox.recv() {
        match msg {
            SourceMsg::Record(rec) => match node.process(rec) {
                Ok(projected) => {
                    let target = partition_key(projected.tile, num_alpha);
                    if to_alpha[target]
                        .send(AlphaMsg::Record {
                            from_pi: pi_id,
                            rec: projected,
                        })
                        .is_err()
                    {
                        return Ok(stats);
                    }
                }
                Err(_) => stats.invalid_dropped += 1,
            },
            SourceMsg::Punct(period) => {
                for tx in &to_alpha {
                    if tx
                        .send(AlphaMsg::Punct {
                            from_pi: pi_id,
                            period,
                        })
                        .is_err()
                    {
                        return Ok(stats);
                    }
                }
            }
            SourceMsg::Flush => {
                for tx in &to_alpha {
                    if tx.send(AlphaMsg::Flush { from_pi: pi_id }).is_err() {
                        return Ok(stats);
                    }
                }
                return Ok(stats);
            }
        }
    }
    Ok(stats)
}

enum AccumulatorNode {
    Plain(AlphaNode),
    Prime(PrimeAlphaNode),
}

/// One accumulator partition.
///
/// Records from different projection workers can interleave out of period
/// order, so each upstream's records wait in a FIFO until every upstream
/// has punctuated at least their period. Releasing in global period order
/// keeps the window node's non-decreasing-period contract intact, and
/// advancing the window to the punctuation minimum after each release
/// keeps this partition's announcements in lockstep with all others even
/// when no record routes here.
struct AlphaWorker {
    alpha_id: usize,
    node: AccumulatorNode,
    puncts: Vec<Option<PeriodId>>,
    flushed: Vec<bool>,
    pending: Vec<VecDeque<ProjectedRecord>>,
    updates: Vec<SignificanceUpdate>,
    max_punct: Option<PeriodId>,
    to_kappa: Sender<KappaMsg>,
}

pub(super) fn run_alpha(
    alpha_id: usize,
    num_pi: usize,
    window: WindowParams,
    retain_points: bool,
    inbox: Receiver<AlphaMsg>,
    to_kappa: Sender<KappaMsg>,
) -> Result<WorkerStats, String> {
    let node = if retain_points {
        AccumulatorNode::Prime(PrimeAlphaNode::new(window))
    } else {
        AccumulatorNode::Plain(AlphaNode::new(window))
    };
    let mut worker = AlphaWorker {
        alpha_id,
        node,
        puncts: vec![None; num_pi],
        flushed: vec![false; num_pi],
        pending: vec![VecDeque::new(); num_pi],
        updates: Vec::new(),
        max_punct: None,
        to_kappa,
    };
    let stats = WorkerStats::default();
    while let Ok(msg) = inbox.recv() {
        match msg {
            AlphaMsg::Record { from_pi, rec } => {
                // A record can run ahead of its own sender's punctuation
                // never behind it, so `period <= min` already implies this
                // sender's FIFO is empty.
                let releasable = worker.released_floor().is_some_and(|m| rec.period <= m);
                if releasable && worker.pending[from_pi].is_empty() {
                    worker.consume(rec)?;
                } else {
                    worker.pending[from_pi].push_back(rec);
                }
            }
            AlphaMsg::Punct { from_pi, period } => {
                worker.puncts[from_pi] = Some(period);
                worker.max_punct = Some(worker.max_punct.map_or(period, |m| m.max(period)));
                worker.release()?;
            }
            AlphaMsg::Flush { from_pi } => {
                worker.flushed[from_pi] = true;
                if worker.flushed.iter().all(|f| *f) {
                    worker.finale()?;
                    if worker.ship().is_err() {
                        return Ok(stats);
                    }
                    let _ = worker.to_kappa.send(KappaMsg::Flush {
                        from_alpha: alpha_id,
                    });
                    return Ok(stats);
                }
                worker.release()?;
            }
        }
        if worker.ship().is_err() {
            return Ok(stats);
        }
    }
    Ok(stats)
}

impl AlphaWorker {
    /// Highest period whose records may be consumed: the punctuation
    /// minimum over upstreams that are still running. `None` while any
    /// live upstream has yet to punctuate.
    fn released_floor(&self) -> Option<PeriodId> {
        let mut min = PeriodId::MAX;
        let mut live = false;
        for (punct, flushed) in self.puncts.iter().zip(&self.flushed) {
            if *flushed {
                continue;
            }
            min = min.min((*punct)?);
            live = true;
        }
        live.then_some(min)
    }

    fn consume(&mut self, rec: ProjectedRecord) -> Result<(), String> {
        let result = match &mut self.node {
            AccumulatorNode::Plain(node) => node.process(rec.tile, rec.period, &mut self.updates),
            AccumulatorNode::Prime(node) => {
                let point = rec
                    .point
                    .ok_or("record arrived without its point in retain mode")?;
                node.process(rec.tile, rec.period, point, &mut self.updates)
            }
        };
        result.map_err(|err| format!("period alignment broke down: {err}"))
    }

    /// Consumes every pending record with period at or below `bound`, in
    /// global period order across upstream FIFOs.
    fn drain_pending(&mut self, bound: PeriodId) -> Result<(), String> {
        loop {
            let mut best: Option<(PeriodId, usize)> = None;
            for (w, queue) in self.pending.iter().enumerate() {
                if let Some(rec) = queue.front() {
                    if rec.period <= bound && best.is_none_or(|(bp, _)| rec.period < bp) {
                        best = Some((rec.period, w));
                    }
                }
            }
            let Some((_, w)) = best else { return Ok(()) };
            let rec = self.pending[w].pop_front().expect("front was just observed");
            self.consume(rec)?;
        }
    }

    fn release(&mut self) -> Result<(), String> {
        let Some(floor) = self.released_floor() else {
            return Ok(());
        };
        self.drain_pending(floor)?;
        match &mut self.node {
            AccumulatorNode::Plain(node) => node.advance_to(floor, &mut self.updates),
            AccumulatorNode::Prime(node) => node.advance_to(floor, &mut self.updates),
        }
        Ok(())
    }

    /// All upstreams flushed: consume everything still pending, close out
    /// through the newest punctuated period, and announce it.
    fn finale(&mut self) -> Result<(), String> {
        self.drain_pending(PeriodId::MAX)?;
        if let Some(last) = self.max_punct {
            match &mut self.node {
                AccumulatorNode::Plain(node) => node.advance_to(last, &mut self.updates),
                AccumulatorNode::Prime(node) => node.advance_to(last, &mut self.updates),
            }
        }
        match &self.node {
            AccumulatorNode::Plain(node) => node.flush(&mut self.updates),
            AccumulatorNode::Prime(node) => node.flush(&mut self.updates),
        }
        Ok(())
    }

    fn ship(&mut self) -> Result<(), Disconnected> {
        for update in self.updates.drain(..) {
            self.to_kappa
                .send(KappaMsg::Update {
                    from_alpha: self.alpha_id,
                    update,
                })
                .map_err(|_| Disconnected)?;
        }
        Ok(())
    }
}

/// The clustering driver.
///
/// Updates from each partition are buffered as segments, one per announced
/// period. A period is labelled only when the barrier reports every
/// partition done with it; each partition's segments are applied up
/// through that period first, so the significant set matches what a
/// single-partition run would hold at the same boundary.
pub(super) fn run_kappa(
    params: KappaParams,
    window_len: u32,
    retain_points: bool,
    num_alpha: usize,
    inbox: Receiver<KappaMsg>,
    rows_out: Sender<ClusterRow>,
) -> Result<WorkerStats, String> {
    let mut node = if retain_points {
        KappaNode::with_point_retention(params, window_len)
    } else {
        KappaNode::new(params)
    };
    let mut barrier = BarrierState::new(num_alpha);
    let mut open: Vec<Vec<SignificanceUpdate>> = vec![Vec::new(); num_alpha];
    let mut closed: Vec<VecDeque<(PeriodId, Vec<SignificanceUpdate>)>> =
        vec![VecDeque::new(); num_alpha];
    let mut flushed = vec![false; num_alpha];
    let mut rows_buf: Vec<ClusterRow> = Vec::new();

    while let Ok(msg) = inbox.recv() {
        match msg {
            KappaMsg::Update { from_alpha, update } => {
                if let SignificanceUpdate::Recluster(period) = update {
                    let segment = std::mem::take(&mut open[from_alpha]);
                    closed[from_alpha].push_back((period, segment));
                    let triggers = barrier
                        .announce(from_alpha, period)
                        .map_err(|err| err.to_string())?;
                    for q in triggers {
                        if !label_period(&mut node, &mut closed, q, &mut rows_buf, &rows_out)? {
                            // Consumer hung up; nothing left to produce.
                            return Ok(WorkerStats::default());
                        }
                    }
                } else {
                    open[from_alpha].push(update);
                }
            }
            KappaMsg::Flush { from_alpha } => {
                flushed[from_alpha] = true;
                if flushed.iter().all(|f| *f) {
                    // Every partition's flush follows its final
                    // announcement, so all triggers have already fired.
                    return Ok(WorkerStats::default());
                }
            }
        }
    }
    Ok(WorkerStats::default())
}

/// Applies every partition's segments up through period `q`, then labels
/// `q` and emits its rows. Returns `false` if the row consumer hung up.
fn label_period(
    node: &mut KappaNode,
    closed: &mut [VecDeque<(PeriodId, Vec<SignificanceUpdate>)>],
    q: PeriodId,
    rows_buf: &mut Vec<ClusterRow>,
    rows_out: &Sender<ClusterRow>,
) -> Result<bool, String> {
    for segments in closed.iter_mut() {
        while segments.front().is_some_and(|(p, _)| *p <= q) {
            let (p, updates) = segments.pop_front().expect("front was just observed");
            for update in updates {
                node.apply(update, rows_buf)
                    .map_err(|err| format!("partition updates were inconsistent: {err}"))?;
                debug_assert!(
                    rows_buf.is_empty(),
                    "only period boundaries may produce rows"
                );
            }
            if p == q {
                break;
            }
        }
    }
    node.apply(SignificanceUpdate::Recluster(q), rows_buf)
        .map_err(|err| format!("labelling period {q} failed: {err}"))?;
    for row in rows_buf.drain(..) {
        if rows_out.send(row).is_err() {
            return Ok(false);
        }
    }
    Ok(true)
}
