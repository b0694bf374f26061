//! Fixed decimal grid shared by the batch and streaming clusterers.
//!
//! Points are projected onto integer tiles by scaling each coordinate with
//! `10^prec` and flooring. A tile identifies the half-open square
//! `[corner, corner + 10^-prec)` on each axis, so every finite point maps to
//! exactly one tile and the grid never has to be materialized.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest supported number of decimal digits per axis.
///
/// `10^15` still fits an `i64` scaled coordinate for longitudes up to 180,
/// which is all the constructors accept.
pub const MAX_PRECISION: u8 = 15;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("coordinate ({x}, {y}) is not finite")]
    NonFinite { x: f64, y: f64 },
    #[error("coordinate {value} does not fit the grid at precision {prec}")]
    OutOfRange { value: f64, prec: u8 },
    #[error("precision {0} exceeds the supported maximum of {MAX_PRECISION}")]
    PrecisionTooLarge(u8),
    #[error("neighborhood radius must be at least 1")]
    ZeroRadius,
}

/// A raw input point. `x` is longitude-like, `y` latitude-like.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub fn new(x: f64, y: f64) -> Self {
        GeoPoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned coordinate bounds used to validate input and to box
/// generated noise. Defaults to the whole longitude/latitude range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bounds {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            min_x: -180.0,
            max_x: 180.0,
            min_y: -90.0,
            max_y: 90.0,
        }
    }
}

impl Bounds {
    pub fn contains(&self, p: GeoPoint) -> bool {
        p.is_finite()
            && p.x >= self.min_x
            && p.x <= self.max_x
            && p.y >= self.min_y
            && p.y <= self.max_y
    }
}

/// Number of decimal digits retained per axis, in `0..=MAX_PRECISION`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Precision(u8);

impl Precision {
    pub fn new(digits: u8) -> Result<Self, GridError> {
        if digits > MAX_PRECISION {
            return Err(GridError::PrecisionTooLarge(digits));
        }
        Ok(Precision(digits))
    }

    pub fn digits(&self) -> u8 {
        self.0
    }

    /// `10^digits`, exact in f64 for all supported precisions.
    pub fn scale(&self) -> f64 {
        10f64.powi(self.0 as i32)
    }
}

/// An occupied grid cell, addressed by its scaled integer corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tile {
    pub xp: i64,
    pub yp: i64,
}

impl Tile {
    pub fn new(xp: i64, yp: i64) -> Self {
        Tile { xp, yp }
    }
}

impl fmt::Display for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.xp, self.yp)
    }
}

/// Which tiles count as adjacent when clusters are grown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// `|dx| + |dy| <= delta`: the von Neumann neighborhood.
    Manhattan,
    /// `max(|dx|, |dy|) <= delta`: the Moore neighborhood.
    Chebyshev,
}

/// Neighborhood shape and radius used by the clustering kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Metric {
    pub kind: MetricKind,
    pub delta: u32,
}

impl Metric {
    pub fn new(kind: MetricKind, delta: u32) -> Result<Self, GridError> {
        if delta == 0 {
            return Err(GridError::ZeroRadius);
        }
        Ok(Metric { kind, delta })
    }

    pub fn chebyshev(delta: u32) -> Result<Self, GridError> {
        Metric::new(MetricKind::Chebyshev, delta)
    }

    pub fn manhattan(delta: u32) -> Result<Self, GridError> {
        Metric::new(MetricKind::Manhattan, delta)
    }
}

impl Default for Metric {
    /// The eight surrounding tiles.
    fn default() -> Self {
        Metric {
            kind: MetricKind::Chebyshev,
            delta: 1,
        }
    }
}

// Scaled values at or beyond 2^63 cannot be represented as a tile corner.
// The comparison is done in f64 before the cast so the saturating float
// to int conversion never silently clamps.
const SCALED_LIMIT: f64 = 9_223_372_036_854_775_808.0;

/// Projects a point to the tile containing it.
///
/// Both axes are scaled by `10^prec` and floored, so negative coordinates
/// round toward negative infinity, never toward zero: `-1.00005` at
/// precision 4 lands on corner `-10001`, not `-10000`.
pub fn project(p: GeoPoint, prec: Precision) -> Result<Tile, GridError> {
    if !p.is_finite() {
        return Err(GridError::NonFinite { x: p.x, y: p.y });
    }
    let scale = prec.scale();
    let sx = (p.x * scale).floor();
    let sy = (p.y * scale).floor();
    if sx >= SCALED_LIMIT || sx < -SCALED_LIMIT {
        return Err(GridError::OutOfRange {
            value: p.x,
            prec: prec.digits(),
        });
    }
    if sy >= SCALED_LIMIT || sy < -SCALED_LIMIT {
        return Err(GridError::OutOfRange {
            value: p.y,
            prec: prec.digits(),
        });
    }
    Ok(Tile::new(sx as i64, sy as i64))
}

/// Maps a tile back to the real coordinates of its corner.
///
/// The result is within one grid cell of every point that projects onto
/// the tile. Round-tripping the corner itself is exact up to f64 division.
pub fn rescale(t: Tile, prec: Precision) -> GeoPoint {
    let scale = prec.scale();
    GeoPoint::new(t.xp as f64 / scale, t.yp as f64 / scale)
}

/// Enumerates all tiles within `metric.delta` of `t`, excluding `t` itself.
///
/// Order is row-major over the offset box and deterministic. Offsets that
/// would leave the representable i64 range are skipped; projected tiles sit
/// far from that edge for every supported precision.
pub fn neighbors(t: Tile, metric: Metric) -> Vec<Tile> {
    let d = metric.delta as i64;
    let mut out = Vec::with_capacity(((2 * d + 1) * (2 * d + 1) - 1) as usize);
    for dx in -d..=d {
        for dy in -d..=d {
            if dx == 0 && dy == 0 {
                continue;
            }
            if metric.kind == MetricKind::Manhattan && dx.abs() + dy.abs() > d {
                continue;
            }
            let (Some(xp), Some(yp)) = (t.xp.checked_add(dx), t.yp.checked_add(dy)) else {
                continue;
            };
            out.push(Tile::new(xp, yp));
        }
    }
    out
}
