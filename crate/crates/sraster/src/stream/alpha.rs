//! Sliding-window accumulation nodes.
//!
//! An accumulator counts projected records per tile over the `c` most
//! recent periods and tells the clustering node whenever a tile crosses
//! the significance threshold in either direction. Two invariants carry
//! the whole module:
//!
//! * `totals[t]` always equals the sum of `window[p][t]` over all retained
//!   periods, so significance is one hash lookup
//! * the window never holds more than `c` period keys, all inside
//!   `(current - c, current]`, so memory stays proportional to the number
//!   of occupied tiles, not to stream length
//!
//! Period advancement is driven by the records themselves. A jump over
//! quiet periods behaves exactly like receiving those periods empty: one
//! `Recluster` per skipped boundary, with expired counts pruned step by
//! step.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::{PeriodId, SignificanceUpdate};
use crate::grid::{GeoPoint, Tile};

#[derive(Debug, Error, PartialEq)]
pub enum AlphaError {
    #[error("record period {period} is older than the current period {current}")]
    LateRecord { period: PeriodId, current: PeriodId },
    #[error("significance threshold must be at least 1")]
    ZeroThreshold,
    #[error("window length must be at least 1")]
    ZeroWindow,
}

/// Threshold and window length shared by every accumulator in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowParams {
    tau: u64,
    window_len: u32,
}

impl WindowParams {
    pub fn new(tau: u64, window_len: u32) -> Result<Self, AlphaError> {
        if tau == 0 {
            return Err(AlphaError::ZeroThreshold);
        }
        if window_len == 0 {
            return Err(AlphaError::ZeroWindow);
        }
        Ok(WindowParams { tau, window_len })
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn window_len(&self) -> u32 {
        self.window_len
    }
}

/// Memory snapshot of one accumulator, for monitoring and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowAudit {
    /// Retained period keys.
    pub periods: usize,
    /// Tile entries summed over all retained periods.
    pub window_entries: usize,
    /// Distinct tiles appearing in any retained period.
    pub distinct_tiles: usize,
    /// Entries in the running totals map.
    pub total_entries: usize,
}

/// Count-only accumulator.
#[derive(Debug, Clone)]
pub struct AlphaNode {
    params: WindowParams,
    totals: HashMap<Tile, u64>,
    window: BTreeMap<PeriodId, BTreeMap<Tile, u64>>,
    current: Option<PeriodId>,
}

impl AlphaNode {
    pub fn new(params: WindowParams) -> Self {
        AlphaNode {
            params,
            totals: HashMap::new(),
            window: BTreeMap::new(),
            current: None,
        }
    }

    pub fn params(&self) -> WindowParams {
        self.params
    }

    /// Most recent period seen, `None` until the first record or advance.
    pub fn current_period(&self) -> Option<PeriodId> {
        self.current
    }

    pub fn totals(&self) -> &HashMap<Tile, u64> {
        &self.totals
    }

    /// Counts one record. Emits threshold crossings and, when the record
    /// opens a newer period, the boundary updates for every period in
    /// between (see [`Self::advance_to`]).
    pub fn process(
        &mut self,
        tile: Tile,
        period: PeriodId,
        out: &mut Vec<SignificanceUpdate>,
    ) -> Result<(), AlphaError> {
        if let Some(current) = self.current {
            if period < current {
                return Err(AlphaError::LateRecord { period, current });
            }
        }
        self.advance_to(period, out);
        let cell = self
            .window
            .entry(period)
            .or_default()
            .entry(tile)
            .or_insert(0);
        *cell += 1;
        let total = self.totals.entry(tile).or_insert(0);
        *total += 1;
        if *total == self.params.tau {
            out.push(SignificanceUpdate::Add(tile));
        }
        Ok(())
    }

    /// Moves the window forward to `target`, emitting one `Recluster` per
    /// completed period and pruning counts that age out on each step. On a
    /// node that has seen nothing yet this just adopts `target` silently:
    /// there are no completed periods to announce. Does nothing when
    /// `target` is not ahead of the current period.
    pub fn advance_to(&mut self, target: PeriodId, out: &mut Vec<SignificanceUpdate>) {
        advance_window(
            &mut self.current,
            &mut self.window,
            &mut self.totals,
            self.params,
            target,
            out,
            |n| *n,
        );
    }

    /// Announces the current period as complete without advancing, so the
    /// final window of a finite stream gets clustered. No-op before the
    /// first record.
    pub fn flush(&self, out: &mut Vec<SignificanceUpdate>) {
        if let Some(current) = self.current {
            out.push(SignificanceUpdate::Recluster(current));
        }
    }

    pub fn audit(&self) -> WindowAudit {
        audit_window(&self.window, self.totals.len())
    }

    /// Cross-checks the bookkeeping invariants, returning a description of
    /// the first violation. Linear in the state size.
    pub fn check_invariants(&self) -> Result<(), String> {
        check_window(
            &self.window,
            &self.totals,
            self.current,
            self.params.window_len,
            |n| *n,
        )
    }
}

/// Point-retaining accumulator. Counts are the sizes of the retained
/// per-tile multisets; crossings additionally ship the points themselves.
#[derive(Debug, Clone)]
pub struct PrimeAlphaNode {
    params: WindowParams,
    totals: HashMap<Tile, u64>,
    window: BTreeMap<PeriodId, BTreeMap<Tile, Vec<GeoPoint>>>,
    current: Option<PeriodId>,
}

impl PrimeAlphaNode {
    pub fn new(params: WindowParams) -> Self {
        PrimeAlphaNode {
            params,
            totals: HashMap::new(),
            window: BTreeMap::new(),
            current: None,
        }
    }

    pub fn params(&self) -> WindowParams {
        self.params
    }

    pub fn current_period(&self) -> Option<PeriodId> {
        self.current
    }

    pub fn totals(&self) -> &HashMap<Tile, u64> {
        &self.totals
    }

    /// Counts one record and retains its point. A tile crossing the
    /// threshold emits `Add` plus its whole retained backlog, one message
    /// per period so the receiver can expire points in step with the
    /// window; each further point while significant is forwarded alone.
    pub fn process(
        &mut self,
        tile: Tile,
        period: PeriodId,
        point: GeoPoint,
        out: &mut Vec<SignificanceUpdate>,
    ) -> Result<(), AlphaError> {
        if let Some(current) = self.current {
            if period < current {
                return Err(AlphaError::LateRecord { period, current });
            }
        }
        self.advance_to(period, out);
        self.window
            .entry(period)
            .or_default()
            .entry(tile)
            .or_default()
            .push(point);
        let total = self.totals.entry(tile).or_insert(0);
        *total += 1;
        if *total == self.params.tau {
            out.push(SignificanceUpdate::Add(tile));
            for (&p, tiles) in &self.window {
                if let Some(points) = tiles.get(&tile) {
                    out.push(SignificanceUpdate::Points {
                        tile,
                        period: p,
                        points: points.clone(),
                    });
                }
            }
        } else if *total > self.params.tau {
            out.push(SignificanceUpdate::Points {
                tile,
                period,
                points: vec![point],
            });
        }
        Ok(())
    }

    /// See [`AlphaNode::advance_to`].
    pub fn advance_to(&mut self, target: PeriodId, out: &mut Vec<SignificanceUpdate>) {
        advance_window(
            &mut self.current,
            &mut self.window,
            &mut self.totals,
            self.params,
            target,
            out,
            |points| points.len() as u64,
        );
    }

    /// See [`AlphaNode::flush`].
    pub fn flush(&self, out: &mut Vec<SignificanceUpdate>) {
        if let Some(current) = self.current {
            out.push(SignificanceUpdate::Recluster(current));
        }
    }

    pub fn audit(&self) -> WindowAudit {
        audit_window(&self.window, self.totals.len())
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        check_window(
            &self.window,
            &self.totals,
            self.current,
            self.params.window_len,
            |points| points.len() as u64,
        )
    }
}

/// Shared advancement loop. `size` maps a window cell to its count so the
/// same pruning works for plain counts and retained point vectors.
fn advance_window<V>(
    current: &mut Option<PeriodId>,
    window: &mut BTreeMap<PeriodId, BTreeMap<Tile, V>>,
    totals: &mut HashMap<Tile, u64>,
    params: WindowParams,
    target: PeriodId,
    out: &mut Vec<SignificanceUpdate>,
    size: impl Fn(&V) -> u64,
) {
    let Some(mut period) = *current else {
        *current = Some(target);
        return;
    };
    while period < target {
        out.push(SignificanceUpdate::Recluster(period));
        period += 1;
        prune(window, totals, params, period, out, &size);
    }
    *current = Some(period);
}

/// Evicts the period that just slid out of the window ending at
/// `new_current`, decrementing totals and emitting `Remove` for every tile
/// that falls below the threshold. Zero totals are deleted outright so the
/// maps only ever hold live tiles.
fn prune<V>(
    window: &mut BTreeMap<PeriodId, BTreeMap<Tile, V>>,
    totals: &mut HashMap<Tile, u64>,
    params: WindowParams,
    new_current: PeriodId,
    out: &mut Vec<SignificanceUpdate>,
    size: &impl Fn(&V) -> u64,
) {
    let evict = new_current - i64::from(params.window_len);
    let Some(cells) = window.remove(&evict) else {
        return;
    };
    for (tile, cell) in cells {
        let n = size(&cell);
        let total = totals
            .get_mut(&tile)
            .expect("window cell must be mirrored in totals");
        let old = *total;
        let new = old - n;
        if old >= params.tau && new < params.tau {
            out.push(SignificanceUpdate::Remove(tile));
        }
        if new == 0 {
            totals.remove(&tile);
        } else {
            *total = new;
        }
    }
}

fn audit_window<V>(
    window: &BTreeMap<PeriodId, BTreeMap<Tile, V>>,
    total_entries: usize,
) -> WindowAudit {
    let mut distinct = std::collections::HashSet::new();
    let mut entries = 0;
    for tiles in window.values() {
        entries += tiles.len();
        distinct.extend(tiles.keys().copied());
    }
    WindowAudit {
        periods: window.len(),
        window_entries: entries,
        distinct_tiles: distinct.len(),
        total_entries,
    }
}

fn check_window<V>(
    window: &BTreeMap<PeriodId, BTreeMap<Tile, V>>,
    totals: &HashMap<Tile, u64>,
    current: Option<PeriodId>,
    window_len: u32,
    size: impl Fn(&V) -> u64,
) -> Result<(), String> {
    if window.len() > window_len as usize {
        return Err(format!(
            "window holds {} periods, limit is {}",
            window.len(),
            window_len
        ));
    }
    let Some(current) = current else {
        if window.is_empty() && totals.is_empty() {
            return Ok(());
        }
        return Err("state populated before the first period".into());
    };
    let mut sums: HashMap<Tile, u64> = HashMap::new();
    for (&p, tiles) in window {
        if p <= current - i64::from(window_len) || p > current {
            return Err(format!("period {p} retained outside the window at {current}"));
        }
        for (tile, cell) in tiles {
            let n = size(cell);
            if n == 0 {
                return Err(format!("zero-count window entry for {tile} in period {p}"));
            }
            *sums.entry(*tile).or_insert(0) += n;
        }
    }
    if sums.len() != totals.len() {
        return Err(format!(
            "totals tracks {} tiles, window holds {}",
            totals.len(),
            sums.len()
        ));
    }
    for (tile, sum) in sums {
        match totals.get(&tile) {
            Some(&t) if t == sum => {}
            Some(&t) => return Err(format!("totals[{tile}] = {t}, window sums to {sum}")),
            None => return Err(format!("{tile} counted in window but missing from totals")),
        }
    }
    Ok(())
}
