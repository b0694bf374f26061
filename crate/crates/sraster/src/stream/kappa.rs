//! The clustering node.
//!
//! κ is the single fan-in point of a run: it folds significance updates
//! from every accumulator into one set of significant tiles, and on each
//! completed period runs the same connected-component kernel the batch
//! clusterer uses, emitting labelled rows.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use super::{ClusterRow, PeriodId, SignificanceUpdate};
use crate::batch::cluster_tiles;
use crate::grid::{rescale, GeoPoint, Metric, Precision, Tile};

#[derive(Debug, Error, PartialEq)]
pub enum KappaError {
    #[error("remove for {0}, which is not significant; updates arrived out of order")]
    RemoveAbsent(Tile),
    #[error("points for {0}, which is not significant; updates arrived out of order")]
    OrphanPoints(Tile),
    #[error("points for {0} on a node that does not retain points")]
    UnexpectedPoints(Tile),
    #[error("minimum cluster size must be at least 1")]
    ZeroClusterSize,
}

/// Clustering parameters fixed for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KappaParams {
    mu: usize,
    metric: Metric,
    prec: Precision,
}

impl KappaParams {
    pub fn new(mu: usize, metric: Metric, prec: Precision) -> Result<Self, KappaError> {
        if mu == 0 {
            return Err(KappaError::ZeroClusterSize);
        }
        Ok(KappaParams { mu, metric, prec })
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn prec(&self) -> Precision {
        self.prec
    }
}

/// Significance-set maintainer and per-period clusterer.
#[derive(Debug, Clone)]
pub struct KappaNode {
    params: KappaParams,
    /// `Some(c)`: retain member points and expire them with the window.
    retention: Option<u32>,
    sigma: HashSet<Tile>,
    points: HashMap<Tile, BTreeMap<PeriodId, Vec<GeoPoint>>>,
}

impl KappaNode {
    pub fn new(params: KappaParams) -> Self {
        KappaNode {
            params,
            retention: None,
            sigma: HashSet::new(),
            points: HashMap::new(),
        }
    }

    /// A node that keeps the member points shipped alongside significance
    /// updates. `window_len` must match the accumulators' window so points
    /// age out in step with the counts that justified them.
    pub fn with_point_retention(params: KappaParams, window_len: u32) -> Self {
        KappaNode {
            params,
            retention: Some(window_len),
            sigma: HashSet::new(),
            points: HashMap::new(),
        }
    }

    pub fn params(&self) -> KappaParams {
        self.params
    }

    /// The current significant-tile set.
    pub fn significant(&self) -> &HashSet<Tile> {
        &self.sigma
    }

    /// Retained points for one tile, oldest period first.
    pub fn retained_points(&self, tile: Tile) -> Vec<GeoPoint> {
        self.points
            .get(&tile)
            .map(|per_period| per_period.values().flatten().copied().collect())
            .unwrap_or_default()
    }

    /// Folds one update into the node. `Recluster(p)` appends the rows for
    /// the window ending at `p`; the other variants only mutate state.
    pub fn apply(
        &mut self,
        update: SignificanceUpdate,
        rows: &mut Vec<ClusterRow>,
    ) -> Result<(), KappaError> {
        match update {
            SignificanceUpdate::Add(tile) => {
                self.sigma.insert(tile);
            }
            SignificanceUpdate::Remove(tile) => {
                if !self.sigma.remove(&tile) {
                    return Err(KappaError::RemoveAbsent(tile));
                }
                self.points.remove(&tile);
            }
            SignificanceUpdate::Points {
                tile,
                period,
                points,
            } => {
                if self.retention.is_none() {
                    return Err(KappaError::UnexpectedPoints(tile));
                }
                if !self.sigma.contains(&tile) {
                    return Err(KappaError::OrphanPoints(tile));
                }
                self.points
                    .entry(tile)
                    .or_default()
                    .entry(period)
                    .or_default()
                    .extend(points);
            }
            SignificanceUpdate::Recluster(period) => self.recluster(period, rows),
        }
        Ok(())
    }

    fn recluster(&mut self, period: PeriodId, rows: &mut Vec<ClusterRow>) {
        if let Some(window_len) = self.retention {
            self.expire_points(period - i64::from(window_len));
        }
        let clusters = cluster_tiles(&self.sigma, self.params.metric, self.params.mu);
        for (id, cluster) in clusters.iter().enumerate() {
            let cluster_id = id as u32;
            for &tile in cluster.iter() {
                let corner = rescale(tile, self.params.prec);
                match self.retention {
                    None => rows.push(ClusterRow {
                        period,
                        cluster_id,
                        x: corner.x,
                        y: corner.y,
                        point: None,
                    }),
                    Some(_) => {
                        for point in self.retained_points(tile) {
                            rows.push(ClusterRow {
                                period,
                                cluster_id,
                                x: corner.x,
                                y: corner.y,
                                point: Some(point),
                            });
                        }
                    }
                }
            }
        }
    }

    /// Drops retained points from periods at or before `cutoff`. Counts on
    /// the accumulators expire the same way, so a tile that stays
    /// significant keeps exactly its in-window points.
    fn expire_points(&mut self, cutoff: PeriodId) {
        self.points.retain(|_, per_period| {
            *per_period = per_period.split_off(&(cutoff + 1));
            !per_period.is_empty()
        });
    }
}
