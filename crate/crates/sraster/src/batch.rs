//! Single-pass batch clustering.
//!
//! The batch path is three small stages: count points per tile, keep the
//! tiles whose count reaches the significance threshold, then grow
//! connected components over the survivors. Components need no spatial
//! index; adjacency is a constant number of hash probes per tile, so the
//! whole run is linear in the input plus the number of significant tiles.
//!
//! [`raster_prime`] is the same pipeline but each tile keeps the exact
//! multiset of points that landed on it, for consumers that need cluster
//! membership at point granularity.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::grid::{project, GeoPoint, GridError, Metric, Precision, Tile};

#[derive(Debug, Error, PartialEq)]
pub enum BatchError {
    #[error("input point {index} rejected: {source}")]
    InvalidPoint { index: usize, source: GridError },
    #[error("significance threshold must be at least 1")]
    ZeroThreshold,
    #[error("minimum cluster size must be at least 1")]
    ZeroClusterSize,
}

/// Parameters of one batch run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchParams {
    prec: Precision,
    tau: u64,
    metric: Metric,
    mu: usize,
}

impl BatchParams {
    pub fn new(prec: Precision, tau: u64, metric: Metric, mu: usize) -> Result<Self, BatchError> {
        if tau == 0 {
            return Err(BatchError::ZeroThreshold);
        }
        if mu == 0 {
            return Err(BatchError::ZeroClusterSize);
        }
        Ok(BatchParams {
            prec,
            tau,
            metric,
            mu,
        })
    }

    pub fn prec(&self) -> Precision {
        self.prec
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn mu(&self) -> usize {
        self.mu
    }
}

/// Occupancy counts per tile. Only occupied tiles are stored; a zero count
/// never appears.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TileCounts {
    counts: HashMap<Tile, u64>,
}

impl TileCounts {
    pub fn get(&self, tile: Tile) -> u64 {
        self.counts.get(&tile).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Tile, u64)> + '_ {
        self.counts.iter().map(|(&t, &n)| (t, n))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// One connected component of significant tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileCluster {
    tiles: BTreeSet<Tile>,
}

impl TileCluster {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn contains(&self, tile: Tile) -> bool {
        self.tiles.contains(&tile)
    }

    /// Tiles in ascending `(xp, yp)` order.
    pub fn iter(&self) -> impl Iterator<Item = &Tile> + '_ {
        self.tiles.iter()
    }

    pub fn into_tiles(self) -> BTreeSet<Tile> {
        self.tiles
    }
}

/// A cluster from the point-retaining path: every tile carries the exact
/// multiset of original points that projected onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCluster {
    cluster: TileCluster,
    points: BTreeMap<Tile, Vec<GeoPoint>>,
}

impl PointCluster {
    pub fn cluster(&self) -> &TileCluster {
        &self.cluster
    }

    /// Points that landed on `tile`, in input order.
    pub fn points_for(&self, tile: Tile) -> &[GeoPoint] {
        self.points
            .get(&tile)
            .map(Vec::as_slice)
            .unwrap_or_default()
    }

    pub fn total_points(&self) -> usize {
        self.points.values().map(Vec::len).sum()
    }
}

/// Counts each point's tile in one pass over the input.
pub fn accumulate<I>(points: I, prec: Precision) -> Result<TileCounts, BatchError>
where
    I: IntoIterator<Item = GeoPoint>,
{
    let mut counts = HashMap::new();
    for (index, point) in points.into_iter().enumerate() {
        let tile = project(point, prec).map_err(|source| BatchError::InvalidPoint { index, source })?;
        *counts.entry(tile).or_insert(0) += 1;
    }
    Ok(TileCounts { counts })
}

/// Tiles whose count reaches `tau`. A count of exactly `tau` qualifies.
pub fn significant_tiles(counts: &TileCounts, tau: u64) -> HashSet<Tile> {
    counts
        .counts
        .iter()
        .filter(|(_, &n)| n >= tau)
        .map(|(&t, _)| t)
        .collect()
}

/// Groups significant tiles into connected components and keeps those with
/// at least `mu` tiles.
///
/// Components are grown depth-first with an explicit stack; adjacency is a
/// membership probe per neighbor offset, so the cost is proportional to
/// `|sigma|` times the neighborhood size. Seeds are visited in ascending
/// `(xp, yp)` order, which fixes the output order and the cluster ids
/// derived from it regardless of hash iteration order.
pub fn cluster_tiles(sigma: &HashSet<Tile>, metric: Metric, mu: usize) -> Vec<TileCluster> {
    let mut seeds: Vec<Tile> = sigma.iter().copied().collect();
    seeds.sort_unstable();

    let mut visited: HashSet<Tile> = HashSet::with_capacity(sigma.len());
    let mut clusters = Vec::new();
    let mut stack = Vec::new();
    for seed in seeds {
        if visited.contains(&seed) {
            continue;
        }
        visited.insert(seed);
        stack.push(seed);
        let mut tiles = BTreeSet::new();
        while let Some(tile) = stack.pop() {
            tiles.insert(tile);
            for neighbor in crate::grid::neighbors(tile, metric) {
                if sigma.contains(&neighbor) && visited.insert(neighbor) {
                    stack.push(neighbor);
                }
            }
        }
        if tiles.len() >= mu {
            clusters.push(TileCluster { tiles });
        }
    }
    clusters
}

/// Full batch run: count, threshold, cluster.
pub fn raster<I>(points: I, params: &BatchParams) -> Result<Vec<TileCluster>, BatchError>
where
    I: IntoIterator<Item = GeoPoint>,
{
    let counts = accumulate(points, params.prec)?;
    let sigma = significant_tiles(&counts, params.tau);
    Ok(cluster_tiles(&sigma, params.metric, params.mu))
}

/// Batch run that retains the original points of every clustered tile.
/// The tile sets are identical to [`raster`] on the same input.
pub fn raster_prime<I>(points: I, params: &BatchParams) -> Result<Vec<PointCluster>, BatchError>
where
    I: IntoIterator<Item = GeoPoint>,
{
    let mut retained: HashMap<Tile, Vec<GeoPoint>> = HashMap::new();
    for (index, point) in points.into_iter().enumerate() {
        let tile = project(point, params.prec)
            .map_err(|source| BatchError::InvalidPoint { index, source })?;
        retained.entry(tile).or_default().push(point);
    }
    let sigma: HashSet<Tile> = retained
        .iter()
        .filter(|(_, pts)| pts.len() as u64 >= params.tau)
        .map(|(&t, _)| t)
        .collect();
    let clusters = cluster_tiles(&sigma, params.metric, params.mu);
    Ok(clusters
        .into_iter()
        .map(|cluster| {
            let points = cluster
                .iter()
                .map(|&tile| {
                    let pts = retained.remove(&tile).expect("clustered tile was counted");
                    (tile, pts)
                })
                .collect();
            PointCluster { cluster, points }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::MetricKind;

    fn prec(digits: u8) -> Precision {
        Precision::new(digits).unwrap()
    }

    fn chebyshev(delta: u32) -> Metric {
        Metric::new(MetricKind::Chebyshev, delta).unwrap()
    }

    fn manhattan(delta: u32) -> Metric {
        Metric::new(MetricKind::Manhattan, delta).unwrap()
    }

    fn t(xp: i64, yp: i64) -> Tile {
        Tile::new(xp, yp)
    }

    /// Five points on each of three tiles: two adjacent near the origin
    /// and one far away.
    fn fifteen_points() -> Vec<GeoPoint> {
        let mut pts = Vec::new();
        for _ in 0..5 {
            pts.push(GeoPoint::new(0.00004, 0.00004));
            pts.push(GeoPoint::new(0.00014, 0.00004));
            pts.push(GeoPoint::new(0.5, 0.5));
        }
        pts
    }

    // ==================== accumulate ====================

    #[test]
    fn counts_collapse_points_per_tile() {
        let pts = vec![
            GeoPoint::new(0.00004, 0.00004),
            GeoPoint::new(0.00004, 0.00004),
            GeoPoint::new(0.00004, 0.00004),
            GeoPoint::new(0.00014, 0.00004),
            GeoPoint::new(0.00014, 0.00004),
        ];
        let counts = accumulate(pts, prec(4)).unwrap();
        assert_eq!(counts.get(t(0, 0)), 3);
        assert_eq!(counts.get(t(1, 0)), 2);
        assert_eq!(counts.len(), 2);
    }

    #[test]
    fn empty_input_yields_no_counts() {
        let counts = accumulate(Vec::new(), prec(4)).unwrap();
        assert!(counts.is_empty());
    }

    #[test]
    fn invalid_point_reports_its_index() {
        let pts = vec![
            GeoPoint::new(1.0, 1.0),
            GeoPoint::new(f64::NAN, 0.0),
            GeoPoint::new(2.0, 2.0),
        ];
        let err = accumulate(pts, prec(4)).unwrap_err();
        assert!(matches!(err, BatchError::InvalidPoint { index: 1, .. }));
    }

    #[test]
    fn accumulate_is_single_pass() {
        let mut pulls = 0;
        let counted = fifteen_points().into_iter().inspect(|_| pulls += 1);
        accumulate(counted, prec(4)).unwrap();
        assert_eq!(pulls, 15, "each input is consumed exactly once");
    }

    // ==================== significance ====================

    #[test]
    fn count_equal_to_tau_is_significant() {
        let counts = accumulate(fifteen_points(), prec(4)).unwrap();
        let sigma = significant_tiles(&counts, 5);
        assert_eq!(sigma.len(), 3, "five points meet a threshold of five");
        let sigma = significant_tiles(&counts, 6);
        assert!(sigma.is_empty());
    }

    // ==================== clustering kernel ====================

    #[test]
    fn adjacent_tiles_cluster_and_small_components_drop() {
        let sigma: HashSet<Tile> = [t(0, 0), t(0, 1), t(5, 5)].into_iter().collect();
        let clusters = cluster_tiles(&sigma, chebyshev(1), 2);
        assert_eq!(clusters.len(), 1);
        assert!(clusters[0].contains(t(0, 0)) && clusters[0].contains(t(0, 1)));
    }

    #[test]
    fn diagonal_chain_depends_on_the_metric() {
        let sigma: HashSet<Tile> = [t(0, 0), t(1, 1), t(2, 2)].into_iter().collect();
        let cheb = cluster_tiles(&sigma, chebyshev(1), 3);
        assert_eq!(cheb.len(), 1, "diagonals connect under Chebyshev");
        let manh = cluster_tiles(&sigma, manhattan(1), 3);
        assert!(manh.is_empty(), "diagonals are distance 2 under Manhattan");
    }

    #[test]
    fn wider_radius_bridges_gaps() {
        let sigma: HashSet<Tile> = [t(0, 0), t(2, 0)].into_iter().collect();
        assert!(cluster_tiles(&sigma, chebyshev(1), 2).is_empty());
        assert_eq!(cluster_tiles(&sigma, chebyshev(2), 2).len(), 1);
    }

    #[test]
    fn clusters_come_out_in_seed_order() {
        let sigma: HashSet<Tile> = [t(10, 0), t(10, 1), t(-3, 0), t(-3, 1)].into_iter().collect();
        let clusters = cluster_tiles(&sigma, chebyshev(1), 2);
        assert_eq!(clusters.len(), 2);
        assert!(
            clusters[0].contains(t(-3, 0)),
            "the cluster holding the smallest tile comes first"
        );
    }

    // ==================== full runs ====================

    #[test]
    fn raster_keeps_the_adjacent_pair_and_drops_the_singleton() {
        let params = BatchParams::new(prec(4), 5, chebyshev(1), 2).unwrap();
        let clusters = raster(fifteen_points(), &params).unwrap();
        assert_eq!(clusters.len(), 1);
        let tiles: Vec<Tile> = clusters[0].iter().copied().collect();
        assert_eq!(tiles, vec![t(0, 0), t(1, 0)]);
    }

    #[test]
    fn raster_on_sparse_input_finds_nothing() {
        let params = BatchParams::new(prec(4), 5, chebyshev(1), 2).unwrap();
        let four: Vec<GeoPoint> = fifteen_points().into_iter().take(4).collect();
        assert!(raster(four, &params).unwrap().is_empty());
    }

    #[test]
    fn zero_parameters_are_rejected() {
        assert_eq!(
            BatchParams::new(prec(4), 0, chebyshev(1), 2),
            Err(BatchError::ZeroThreshold)
        );
        assert_eq!(
            BatchParams::new(prec(4), 1, chebyshev(1), 0),
            Err(BatchError::ZeroClusterSize)
        );
    }

    // ==================== point retention ====================

    #[test]
    fn prime_clusters_match_and_conserve_points() {
        let params = BatchParams::new(prec(4), 5, chebyshev(1), 2).unwrap();
        let plain = raster(fifteen_points(), &params).unwrap();
        let prime = raster_prime(fifteen_points(), &params).unwrap();
        assert_eq!(plain.len(), prime.len());
        for (a, b) in plain.iter().zip(&prime) {
            assert_eq!(a, b.cluster(), "tile sets agree between both paths");
            let counted: usize = a.iter().map(|_| 5).sum();
            assert_eq!(b.total_points(), counted, "every counted point is retained");
        }
        let near_origin = &prime[0];
        assert_eq!(near_origin.points_for(t(0, 0)).len(), 5);
        assert_eq!(near_origin.points_for(t(9, 9)).len(), 0);
    }
}
