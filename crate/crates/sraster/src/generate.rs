//! Seeded synthetic point streams with ground truth.
//!
//! A [`GeneratorSpec`] describes point hubs (Gaussian blobs that live for a
//! span of periods and may drift) plus optional uniform background noise.
//! Generation is driven by one seeded portable RNG, so the same spec
//! always produces byte-identical output, on any platform.
//!
//! Points are written as headerless `x,y,timestamp` rows with RFC 3339
//! timestamps, ready for the CSV ingestor with the same period length and
//! epoch. The ground truth sidecar records each hub's center per period it
//! was alive, with a header row, for judging cluster output against what
//! the generator actually did.

use std::io::Write;

use chrono::{SecondsFormat, TimeZone, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Bounds, GeoPoint};
use crate::stream::{PeriodId, StreamRecord};

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("period_seconds must be at least 1")]
    ZeroPeriod,
    #[error("hub {index}: {message}")]
    InvalidHub { index: usize, message: String },
    #[error("noise: {message}")]
    InvalidNoise { message: String },
    #[error("timestamp {0} does not fit the calendar")]
    TimestampOutOfRange(i64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_period_seconds() -> i64 {
    60
}

/// Everything needed to produce one synthetic stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub seed: u64,
    pub num_periods: u32,
    #[serde(default)]
    pub hubs: Vec<HubSpec>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    /// Length of one period in seconds.
    #[serde(default = "default_period_seconds")]
    pub period_seconds: i64,
    /// Timestamp of the start of period 0, in epoch seconds.
    #[serde(default)]
    pub epoch: i64,
}

/// A Gaussian point source alive for `[start, end)` periods.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HubSpec {
    /// Center at birth, `[x, y]`.
    pub center: [f64; 2],
    /// Per-axis standard deviation.
    pub stddev: f64,
    pub points_per_period: u64,
    /// First period the hub emits in.
    #[serde(default)]
    pub start: u32,
    /// First period the hub is silent in; the stream end when omitted.
    #[serde(default)]
    pub end: Option<u32>,
    /// Center shift per period of age, `[dx, dy]`.
    #[serde(default)]
    pub drift: [f64; 2],
}

impl HubSpec {
    fn active(&self, period: u32, num_periods: u32) -> bool {
        period >= self.start && period < self.end.unwrap_or(num_periods)
    }

    fn center_at(&self, period: u32) -> GeoPoint {
        let age = f64::from(period - self.start);
        GeoPoint::new(
            self.center[0] + self.drift[0] * age,
            self.center[1] + self.drift[1] * age,
        )
    }
}

/// Uniform background clutter over a bounding box.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub points_per_period: u64,
    /// Defaults to the whole longitude/latitude range.
    #[serde(default)]
    pub bounds: Bounds,
}

/// One generated point with its wall-clock timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPoint {
    pub point: GeoPoint,
    /// Epoch seconds.
    pub timestamp: i64,
    pub period: PeriodId,
}

/// Where one hub actually was in one period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRow {
    pub hub: usize,
    pub period: PeriodId,
    pub center: GeoPoint,
}

/// A generated stream plus its ground truth.
#[derive(Debug, Clone, Default)]
pub struct Generated {
    /// Points in emission order: period-major, timestamps non-decreasing.
    pub points: Vec<TimedPoint>,
    pub truth: Vec<TruthRow>,
}

impl Generated {
    /// The points as period-stamped records, ready for the pipeline.
    pub fn records(&self) -> impl Iterator<Item = StreamRecord> + '_ {
        self.points
            .iter()
            .map(|t| StreamRecord::new(t.point, t.period))
    }
}

fn validate(spec: &GeneratorSpec) -> Result<(), GenerateError> {
    if spec.period_seconds < 1 {
        return Err(GenerateError::ZeroPeriod);
    }
    for (index, hub) in spec.hubs.iter().enumerate() {
        let bad = |message: &str| GenerateError::InvalidHub {
            index,
            message: message.to_string(),
        };
        if !(hub.center[0].is_finite() && hub.center[1].is_finite()) {
            return Err(bad("center must be finite"));
        }
        if !(hub.drift[0].is_finite() && hub.drift[1].is_finite()) {
            return Err(bad("drift must be finite"));
        }
        if !hub.stddev.is_finite() || hub.stddev < 0.0 {
            return Err(bad("stddev must be finite and non-negative"));
        }
        if hub.end.is_some_and(|end| end < hub.start) {
            return Err(bad("end precedes start"));
        }
    }
    if let Some(noise) = &spec.noise {
        let b = noise.bounds;
        if !(b.min_x <= b.max_x && b.min_y <= b.max_y) {
            return Err(GenerateError::InvalidNoise {
                message: "bounds are inverted".to_string(),
            });
        }
    }
    Ok(())
}

/// Produces the stream described by `spec`.
///
/// Points come out period by period. Within a period each live hub emits
/// its batch in hub order, then the noise; timestamps are spaced evenly
/// across the period in that same order, so the stream is already sorted
/// by time.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated, GenerateError> {
    validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Generated::default();
    for period in 0..spec.num_periods {
        let hub_total: u64 = spec
            .hubs
            .iter()
            .filter(|hub| hub.active(period, spec.num_periods))
            .map(|hub| hub.points_per_period)
            .sum();
        let noise_total = spec
            .noise
            .as_ref()
            .map_or(0, |noise| noise.points_per_period);
        let total = (hub_total + noise_total).max(1);
        let base = spec.epoch + i64::from(period) * spec.period_seconds;
        let mut slot: u64 = 0;
        let next_timestamp = |slot: &mut u64| -> i64 {
            let offset =
                i128::from(*slot) * i128::from(spec.period_seconds) / i128::from(total);
            *slot += 1;
            base + offset as i64
        };

        for (index, hub) in spec.hubs.iter().enumerate() {
            if !hub.active(period, spec.num_periods) {
                continue;
            }
            let center = hub.center_at(period);
            out.truth.push(TruthRow {
                hub: index,
                period: PeriodId::from(period),
                center,
            });
            let spread_x = Normal::new(center.x, hub.stddev).map_err(|err| {
                GenerateError::InvalidHub {
                    index,
                    message: err.to_string(),
                }
            })?;
            let spread_y = Normal::new(center.y, hub.stddev).map_err(|err| {
                GenerateError::InvalidHub {
                    index,
                    message: err.to_string(),
                }
            })?;
            for _ in 0..hub.points_per_period {
                let point = GeoPoint::new(spread_x.sample(&mut rng), spread_y.sample(&mut rng));
                out.points.push(TimedPoint {
                    point,
                    timestamp: next_timestamp(&mut slot),
                    period: PeriodId::from(period),
                });
            }
        }

        if let Some(noise) = &spec.noise {
            let b = noise.bounds;
            let scatter_x = Uniform::new_inclusive(b.min_x, b.max_x).map_err(|err| {
                GenerateError::InvalidNoise {
                    message: err.to_string(),
                }
            })?;
            let scatter_y = Uniform::new_inclusive(b.min_y, b.max_y).map_err(|err| {
                GenerateError::InvalidNoise {
                    message: err.to_string(),
                }
            })?;
            for _ in 0..noise.points_per_period {
                let point =
                    GeoPoint::new(scatter_x.sample(&mut rng), scatter_y.sample(&mut rng));
                out.points.push(TimedPoint {
                    point,
                    timestamp: next_timestamp(&mut slot),
                    period: PeriodId::from(period),
                });
            }
        }
    }
    Ok(out)
}

/// Writes headerless `x,y,timestamp` rows with RFC 3339 UTC timestamps.
pub fn write_points_csv<W: Write>(points: &[TimedPoint], mut out: W) -> Result<(), GenerateError> {
    for p in points {
        let stamp = Utc
            .timestamp_opt(p.timestamp, 0)
            .single()
            .ok_or(GenerateError::TimestampOutOfRange(p.timestamp))?;
        writeln!(
            out,
            "{},{},{}",
            p.point.x,
            p.point.y,
            stamp.to_rfc3339_opts(SecondsFormat::Secs, true)
        )?;
    }
    Ok(())
}

/// Writes `hub,period,x,y` rows under a header.
pub fn write_truth_csv<W: Write>(truth: &[TruthRow], mut out: W) -> Result<(), GenerateError> {
    writeln!(out, "hub,period,x,y")?;
    for row in truth {
        writeln!(
            out,
            "{},{},{},{}",
            row.hub, row.period, row.center.x, row.center.y
        )?;
    }
    Ok(())
}
