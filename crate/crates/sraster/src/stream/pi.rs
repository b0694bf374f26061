//! Stateless projection nodes.

use super::{ProjectedRecord, StreamRecord};
use crate::grid::{project, GridError, Precision};

/// Projects records onto tiles. Carries no state, so any number of
/// instances can run in parallel on an arbitrary split of the input.
#[derive(Debug, Clone, Copy)]
pub struct PiNode {
    prec: Precision,
    retain_points: bool,
}

impl PiNode {
    pub fn new(prec: Precision, retain_points: bool) -> Self {
        PiNode {
            prec,
            retain_points,
        }
    }

    /// Maps the record's point to its tile; the period passes through
    /// untouched. When points are retained the original coordinates ride
    /// along for downstream output.
    pub fn process(&self, record: StreamRecord) -> Result<ProjectedRecord, GridError> {
        let tile = project(record.point, self.prec)?;
        Ok(ProjectedRecord {
            tile,
            period: record.period,
            point: self.retain_points.then_some(record.point),
        })
    }
}
