//! Completion tracking across accumulator partitions.
//!
//! Every accumulator announces each period it finishes, in its own stream
//! order. A period may only be clustered once *every* partition has
//! finished it, otherwise a slow partition could still deliver adds and
//! removes for a window that was already labelled. The barrier reduces the
//! per-partition announcements to a single increasing sequence of safe
//! periods.

use thiserror::Error;

use crate::stream::PeriodId;

#[derive(Debug, Error, PartialEq)]
pub enum BarrierError {
    #[error("partition {alpha} announced period {period} after already announcing {prev}")]
    Regressed {
        alpha: usize,
        period: PeriodId,
        prev: PeriodId,
    },
}

/// Watermark tracker over `num_alpha` partitions.
#[derive(Debug, Clone)]
pub struct BarrierState {
    announced: Vec<Option<PeriodId>>,
    /// Next period to trigger; `None` until the first trigger fires.
    next: Option<PeriodId>,
}

impl BarrierState {
    pub fn new(num_alpha: usize) -> Self {
        BarrierState {
            announced: vec![None; num_alpha],
            next: None,
        }
    }

    /// Highest period each partition has announced so far.
    pub fn watermark(&self, alpha: usize) -> Option<PeriodId> {
        self.announced[alpha]
    }

    /// Records that `alpha` completed `period` and returns the periods now
    /// safe to cluster, in increasing order.
    ///
    /// Re-announcing the current watermark is a no-op (a second flush does
    /// that); announcing anything older is a protocol violation.
    pub fn announce(
        &mut self,
        alpha: usize,
        period: PeriodId,
    ) -> Result<Vec<PeriodId>, BarrierError> {
        match self.announced[alpha] {
            Some(prev) if period < prev => {
                return Err(BarrierError::Regressed {
                    alpha,
                    period,
                    prev,
                })
            }
            Some(prev) if period == prev => return Ok(Vec::new()),
            _ => self.announced[alpha] = Some(period),
        }

        let mut min = PeriodId::MAX;
        for watermark in &self.announced {
            match watermark {
                None => return Ok(Vec::new()),
                Some(p) => min = min.min(*p),
            }
        }

        // The first safe period is the lowest watermark at the moment the
        // last partition reports in; announcements only ever grow from
        // there.
        let mut q = self.next.unwrap_or(min);
        let mut triggers = Vec::new();
        while q <= min {
            triggers.push(q);
            q += 1;
        }
        self.next = Some(q);
        Ok(triggers)
    }
}
