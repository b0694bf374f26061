//! Shared helpers: a synchronous single-partition run of the three node
//! state machines, with a state snapshot at every period boundary.

use std::collections::{BTreeMap, BTreeSet};

use sraster::batch::BatchParams;
use sraster::grid::{GeoPoint, Tile};
use sraster::stream::alpha::{AlphaNode, PrimeAlphaNode};
use sraster::stream::kappa::{KappaNode, KappaParams};
use sraster::stream::pi::PiNode;
use sraster::stream::{ClusterRow, PeriodId, SignificanceUpdate, StreamRecord};

use sraster::stream::alpha::WindowParams;

/// What the clustering node knew right after labelling one period.
pub struct Boundary {
    pub period: PeriodId,
    /// The significant set used for this labelling.
    pub sigma: BTreeSet<Tile>,
    /// Retained points per significant tile (empty unless retaining).
    pub points: BTreeMap<Tile, Vec<GeoPoint>>,
    /// The rows emitted for this period.
    pub rows: Vec<ClusterRow>,
}

pub struct SyncRun {
    pub rows: Vec<ClusterRow>,
    pub boundaries: Vec<Boundary>,
}

/// Drives projection, accumulation, and clustering synchronously over an
/// in-order record stream, flushing at the end. Equivalent to the threaded
/// pipeline at `num_pi = num_alpha = 1`.
pub fn drive_nodes(
    records: &[StreamRecord],
    params: BatchParams,
    window_len: u32,
    retain_points: bool,
) -> SyncRun {
    let pi = PiNode::new(params.prec(), retain_points);
    let window = WindowParams::new(params.tau(), window_len).expect("test params are valid");
    let kappa_params = KappaParams::new(params.mu(), params.metric(), params.prec())
        .expect("test params are valid");
    let mut plain = AlphaNode::new(window);
    let mut prime = PrimeAlphaNode::new(window);
    let mut kappa = if retain_points {
        KappaNode::with_point_retention(kappa_params, window_len)
    } else {
        KappaNode::new(kappa_params)
    };

    let mut run = SyncRun {
        rows: Vec::new(),
        boundaries: Vec::new(),
    };
    let mut updates: Vec<SignificanceUpdate> = Vec::new();
    for record in records {
        let projected = pi.process(*record).expect("test records are projectable");
        if retain_points {
            prime
                .process(
                    projected.tile,
                    projected.period,
                    projected.point.expect("retaining projection keeps the point"),
                    &mut updates,
                )
                .expect("test records are in period order");
        } else {
            plain
                .process(projected.tile, projected.period, &mut updates)
                .expect("test records are in period order");
        }
        apply(&mut kappa, &mut updates, &mut run);
    }
    if retain_points {
        prime.flush(&mut updates);
    } else {
        plain.flush(&mut updates);
    }
    apply(&mut kappa, &mut updates, &mut run);
    run
}

fn apply(kappa: &mut KappaNode, updates: &mut Vec<SignificanceUpdate>, run: &mut SyncRun) {
    let mut rows: Vec<ClusterRow> = Vec::new();
    for update in updates.drain(..) {
        let boundary = match update {
            SignificanceUpdate::Recluster(period) => Some(period),
            _ => None,
        };
        kappa
            .apply(update, &mut rows)
            .expect("accumulator updates are consistent");
        if let Some(period) = boundary {
            let sigma: BTreeSet<Tile> = kappa.significant().iter().copied().collect();
            let points = sigma
                .iter()
                .map(|tile| (*tile, kappa.retained_points(*tile)))
                .filter(|(_, points)| !points.is_empty())
                .collect();
            run.boundaries.push(Boundary {
                period,
                sigma,
                points,
                rows: rows.clone(),
            });
            run.rows.append(&mut rows);
        } else {
            assert!(rows.is_empty(), "only period boundaries may emit rows");
        }
    }
}

/// Clusters as sets of bit-exact coordinate pairs, sorted, so two cluster
/// lists compare structurally regardless of label assignment.
pub fn canonical_clusters<I, C>(clusters: I) -> Vec<Vec<(u64, u64)>>
where
    I: IntoIterator<Item = C>,
    C: IntoIterator<Item = GeoPoint>,
{
    let mut out: Vec<Vec<(u64, u64)>> = clusters
        .into_iter()
        .map(|cluster| {
            let mut tiles: Vec<(u64, u64)> = cluster
                .into_iter()
                .map(|p| (p.x.to_bits(), p.y.to_bits()))
                .collect();
            tiles.sort_unstable();
            tiles.dedup();
            tiles
        })
        .collect();
    out.sort_unstable();
    out
}

/// Groups one boundary's rows into clusters of rescaled tile corners.
pub fn clusters_from_rows(rows: &[ClusterRow]) -> Vec<Vec<GeoPoint>> {
    let mut by_id: BTreeMap<u32, Vec<GeoPoint>> = BTreeMap::new();
    for row in rows {
        by_id
            .entry(row.cluster_id)
            .or_default()
            .push(GeoPoint::new(row.x, row.y));
    }
    by_id.into_values().collect()
}

/// A point multiset as sorted bit patterns, for exact comparison.
pub fn point_multiset<'a, I>(points: I) -> Vec<(u64, u64)>
where
    I: IntoIterator<Item = &'a GeoPoint>,
{
    let mut out: Vec<(u64, u64)> = points
        .into_iter()
        .map(|p| (p.x.to_bits(), p.y.to_bits()))
        .collect();
    out.sort_unstable();
    out
}
