//! CSV ingestion: rows of `x,y,timestamp` become period-stamped records.
//!
//! Timestamps are RFC 3339 strings or integer epoch seconds, detected per
//! cell, so exported feeds and raw unix-time logs both work without
//! configuration. Every record's period is the number of whole period
//! lengths between the stream epoch and its timestamp. When no epoch is
//! given, the first record's timestamp rounded down to a period boundary
//! becomes the epoch, so period numbering starts at zero.
//!
//! Errors carry 1-based line numbers; a reader wrapped in
//! [`CsvStream`] stops at the first bad row.

use std::io::Read;

use chrono::DateTime;
use thiserror::Error;

use crate::grid::GeoPoint;
use crate::stream::{PeriodId, StreamRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("period length must be at least 1 second")]
    ZeroPeriod,
    #[error("line {line}: {source}")]
    Malformed {
        line: u64,
        source: Box<csv::Error>,
    },
    #[error("line {line}: expected at least {expected} columns, found {found}")]
    MissingColumns {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {field} value {value:?} is not a number")]
    BadCoordinate {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error(
        "line {line}: timestamp {value:?} is neither RFC 3339 nor integer epoch seconds"
    )]
    BadTimestamp { line: u64, value: String },
    #[error("line {line}: timestamp {timestamp} precedes the stream epoch {epoch}")]
    BeforeEpoch {
        line: u64,
        timestamp: i64,
        epoch: i64,
    },
}

/// How to read a point stream out of delimited text.
#[derive(Debug, Clone, Copy)]
pub struct IngestConfig {
    period_length: i64,
    /// Stream epoch in epoch seconds; `None` derives it from the first
    /// record.
    pub epoch: Option<i64>,
    pub delimiter: u8,
    /// Skip one leading header row.
    pub has_headers: bool,
    pub x_column: usize,
    pub y_column: usize,
    pub time_column: usize,
}

impl IngestConfig {
    /// Plain comma-separated `x,y,timestamp` with periods of
    /// `period_length` seconds.
    pub fn new(period_length: i64) -> Result<Self, IngestError> {
        if period_length < 1 {
            return Err(IngestError::ZeroPeriod);
        }
        Ok(IngestConfig {
            period_length,
            epoch: None,
            delimiter: b',',
            has_headers: false,
            x_column: 0,
            y_column: 1,
            time_column: 2,
        })
    }

    pub fn period_length(&self) -> i64 {
        self.period_length
    }
}

/// Epoch seconds for `value`, which may be RFC 3339 (`2021-04-06T08:30:00Z`)
/// or a plain integer of epoch seconds (`1617697800`).
pub fn parse_timestamp(value: &str) -> Option<i64> {
    let value = value.trim();
    if value.is_empty() {
        return None;
    }
    if let Ok(seconds) = value.parse::<i64>() {
        return Some(seconds);
    }
    DateTime::parse_from_rfc3339(value)
        .ok()
        .map(|dt| dt.timestamp())
}

/// Number of whole periods between the epoch and `timestamp`; negative
/// when the timestamp precedes the epoch.
pub fn assign_period(timestamp: i64, epoch: i64, period_length: i64) -> PeriodId {
    let span = i128::from(timestamp) - i128::from(epoch);
    span.div_euclid(i128::from(period_length)) as PeriodId
}

/// `timestamp` rounded down to a multiple of `period_length`. Deriving the
/// stream epoch this way pins period boundaries to wall-clock multiples of
/// the period, so reruns over overlapping data agree on the numbering.
pub fn align_epoch(timestamp: i64, period_length: i64) -> i64 {
    timestamp.div_euclid(period_length) * period_length
}

/// Iterator of period-stamped records over delimited text.
///
/// Yields `Err` once for the first malformed row; iteration should stop
/// there.
pub struct CsvStream<R: Read> {
    reader: csv::StringRecordsIntoIter<R>,
    config: IngestConfig,
    epoch: Option<i64>,
}

impl<R: Read> CsvStream<R> {
    pub fn new(input: R, config: IngestConfig) -> Self {
        let reader = csv::ReaderBuilder::new()
            .delimiter(config.delimiter)
            .has_headers(config.has_headers)
            .flexible(true)
            .from_reader(input)
            .into_records();
        CsvStream {
            reader,
            config,
            epoch: config.epoch,
        }
    }

    /// The stream epoch, once known. Populated up front when the config
    /// pins it, otherwise after the first record.
    pub fn epoch(&self) -> Option<i64> {
        self.epoch
    }

    fn parse(&mut self, record: &csv::StringRecord) -> Result<StreamRecord, IngestError> {
        let line = record.position().map_or(0, |p| p.line());
        let expected = self
            .config
            .x_column
            .max(self.config.y_column)
            .max(self.config.time_column)
            + 1;
        if record.len() < expected {
            return Err(IngestError::MissingColumns {
                line,
                expected,
                found: record.len(),
            });
        }
        let coordinate = |column: usize, field: &'static str| -> Result<f64, IngestError> {
            let value = &record[column];
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| IngestError::BadCoordinate {
                    line,
                    field,
                    value: value.to_string(),
                })
        };
        let x = coordinate(self.config.x_column, "x")?;
        let y = coordinate(self.config.y_column, "y")?;
        let raw_time = &record[self.config.time_column];
        let timestamp = parse_timestamp(raw_time).ok_or_else(|| IngestError::BadTimestamp {
            line,
            value: raw_time.to_string(),
        })?;
        let epoch = *self
            .epoch
            .get_or_insert_with(|| align_epoch(timestamp, self.config.period_length));
        if timestamp < epoch {
            return Err(IngestError::BeforeEpoch {
                line,
                timestamp,
                epoch,
            });
        }
        let period = assign_period(timestamp, epoch, self.config.period_length);
        Ok(StreamRecord::new(GeoPoint::new(x, y), period))
    }
}

impl<R: Read> Iterator for CsvStream<R> {
    type Item = Result<StreamRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.reader.next()? {
            Ok(record) => Some(self.parse(&record)),
            Err(err) => {
                let line = err
                    .position()
                    .map_or(0, |p| p.line());
                Some(Err(IngestError::Malformed {
                    line,
                    source: Box::new(err),
                }))
            }
        }
    }
}
