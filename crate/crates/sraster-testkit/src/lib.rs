//! Brute-force reference implementations for cross-checking the main
//! crate in tests.
//!
//! Everything here trades speed for obviousness and deliberately avoids
//! the main crate's code paths: significance is recomputed by rescanning a
//! raw append-only log instead of maintaining counts, and clusters are
//! grown by comparing every pair of tiles instead of probing neighbor
//! offsets. If the fast paths and these agree, both are probably right.
//!
//! Not part of the shipped library; depend on it from `dev-dependencies`
//! only.

use std::collections::{BTreeMap, BTreeSet};

use sraster::grid::{GeoPoint, Metric, MetricKind, Tile};
use sraster::stream::PeriodId;

/// Append-only record of everything fed to the system under test.
#[derive(Debug, Clone, Default)]
pub struct RawLog {
    entries: Vec<LogEntry>,
}

#[derive(Debug, Clone, Copy)]
pub struct LogEntry {
    pub tile: Tile,
    pub period: PeriodId,
    pub point: Option<GeoPoint>,
}

impl RawLog {
    pub fn new() -> Self {
        RawLog::default()
    }

    pub fn push(&mut self, tile: Tile, period: PeriodId) {
        self.entries.push(LogEntry {
            tile,
            period,
            point: None,
        });
    }

    pub fn push_point(&mut self, tile: Tile, period: PeriodId, point: GeoPoint) {
        self.entries.push(LogEntry {
            tile,
            period,
            point: Some(point),
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn in_window(&self, at: PeriodId, window_len: u32) -> impl Iterator<Item = &LogEntry> {
        let oldest = at - i64::from(window_len) + 1;
        self.entries
            .iter()
            .filter(move |e| e.period >= oldest && e.period <= at)
    }
}

/// Tiles with at least `tau` log entries in the window of `window_len`
/// periods ending at `at`, found by rescanning the whole log.
pub fn significant_at(log: &RawLog, at: PeriodId, window_len: u32, tau: u64) -> BTreeSet<Tile> {
    let mut counts: BTreeMap<Tile, u64> = BTreeMap::new();
    for entry in log.in_window(at, window_len) {
        *counts.entry(entry.tile).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .filter(|&(_, n)| n >= tau)
        .map(|(t, _)| t)
        .collect()
}

/// The raw points inside the window ending at `at`, grouped by tile, in
/// log order. Entries logged without a point are skipped.
pub fn window_points(
    log: &RawLog,
    at: PeriodId,
    window_len: u32,
) -> BTreeMap<Tile, Vec<GeoPoint>> {
    let mut out: BTreeMap<Tile, Vec<GeoPoint>> = BTreeMap::new();
    for entry in log.in_window(at, window_len) {
        if let Some(point) = entry.point {
            out.entry(entry.tile).or_default().push(point);
        }
    }
    out
}

/// Clusters grown by comparing every pair of significant tiles and
/// unioning the ones within `metric.delta` of each other, then dropping
/// components smaller than `mu`. Quadratic on purpose.
pub fn pairwise_clusters(
    sigma: &BTreeSet<Tile>,
    metric: Metric,
    mu: usize,
) -> Vec<Vec<Tile>> {
    let tiles: Vec<Tile> = sigma.iter().copied().collect();
    let mut forest = UnionFind::new(tiles.len());
    for i in 0..tiles.len() {
        for j in (i + 1)..tiles.len() {
            if within(tiles[i], tiles[j], metric) {
                forest.union(i, j);
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<Tile>> = BTreeMap::new();
    for (i, &tile) in tiles.iter().enumerate() {
        components.entry(forest.find(i)).or_default().push(tile);
    }
    canonicalize(components.into_values().filter(|c| c.len() >= mu))
}

fn within(a: Tile, b: Tile, metric: Metric) -> bool {
    let dx = a.xp.abs_diff(b.xp);
    let dy = a.yp.abs_diff(b.yp);
    let d = u64::from(metric.delta);
    match metric.kind {
        MetricKind::Chebyshev => dx.max(dy) <= d,
        MetricKind::Manhattan => dx.saturating_add(dy) <= d,
    }
}

/// Canonical form for comparing cluster sets regardless of labelling:
/// tiles sorted within each cluster, clusters sorted by their smallest
/// tile.
pub fn canonicalize<I, C>(clusters: I) -> Vec<Vec<Tile>>
where
    I: IntoIterator<Item = C>,
    C: IntoIterator<Item = Tile>,
{
    let mut out: Vec<Vec<Tile>> = clusters
        .into_iter()
        .map(|c| {
            let mut tiles: Vec<Tile> = c.into_iter().collect();
            tiles.sort_unstable();
            tiles
        })
        .collect();
    out.sort();
    out
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let mut ra = self.find(a);
        let mut rb = self.find(b);
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}
