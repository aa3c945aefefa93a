//! Millidegree grid cells used as vertex identity.
//!
//! Coordinates are floored onto a 10⁻³ degree grid, so every cell is the
//! half-open square `[lat_milli/1000, (lat_milli+1)/1000) × [lon_milli/1000, ...)`.
//! A small epsilon is added before flooring so that decimal inputs such as
//! `45.123`, which may sit one ulp below the grid line after parsing, land in
//! the cell their text suggests.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const MILLI_PER_DEGREE: f64 = 1000.0;
pub const GRID_EPSILON: f64 = 1e-9;

pub const LAT_MILLI_MAX: i32 = 90_000;
pub const LON_MILLI_MAX: i32 = 180_000;

/// Mean Earth radius (IUGG), in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

const SIGN_FLIP: u32 = 0x8000_0000;

/// A millidegree grid cell. Ordering is lexicographic on `(lat_milli, lon_milli)`,
/// which is also the ordering of the packed 64-bit key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocationId {
    pub lat_milli: i32,
    pub lon_milli: i32,
}

impl LocationId {
    pub fn new(lat_milli: i32, lon_milli: i32) -> Option<Self> {
        if (-LAT_MILLI_MAX..=LAT_MILLI_MAX).contains(&lat_milli) && (-LON_MILLI_MAX..=LON_MILLI_MAX).contains(&lon_milli) {
            Some(Self { lat_milli, lon_milli })
        } else {
            None
        }
    }

    /// Packs into one order-preserving 64-bit key.
    ///
    /// Each half is the two's-complement value with its sign bit flipped, so
    /// unsigned comparison of the key matches signed comparison of the pair.
    #[inline]
    pub fn pack(self) -> u64 {
        let lat = (self.lat_milli as u32) ^ SIGN_FLIP;
        let lon = (self.lon_milli as u32) ^ SIGN_FLIP;
        (u64::from(lat) << 32) | u64::from(lon)
    }

    #[inline]
    pub fn unpack(key: u64) -> Self {
        let lat = ((key >> 32) as u32 ^ SIGN_FLIP) as i32;
        let lon = (key as u32 ^ SIGN_FLIP) as i32;
        Self {
            lat_milli: lat,
            lon_milli: lon,
        }
    }

    /// Like [`LocationId::unpack`] but rejects keys outside the valid grid.
    pub fn try_unpack(key: u64) -> Option<Self> {
        let id = Self::unpack(key);
        Self::new(id.lat_milli, id.lon_milli)
    }

    pub fn center(self) -> (f64, f64) {
        cell_center(self)
    }
}

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.lat_milli, self.lon_milli)
    }
}

#[inline]
fn to_milli(deg: f64) -> i32 {
    (deg * MILLI_PER_DEGREE + GRID_EPSILON).floor() as i32
}

/// Maps a coordinate pair (degrees) to its grid cell.
///
/// Inputs are expected to be in range (`|lat| ≤ 90`, `|lon| ≤ 180`); the
/// result is clamped to the valid grid so the boundary values stay valid.
pub fn quantize(lat: f64, lon: f64) -> LocationId {
    LocationId {
        lat_milli: to_milli(lat).clamp(-LAT_MILLI_MAX, LAT_MILLI_MAX),
        lon_milli: to_milli(lon).clamp(-LON_MILLI_MAX, LON_MILLI_MAX),
    }
}

/// Center of the half-open cell, as `(lat, lon)` degrees.
pub fn cell_center(id: LocationId) -> (f64, f64) {
    (
        (f64::from(id.lat_milli) + 0.5) / MILLI_PER_DEGREE,
        (f64::from(id.lon_milli) + 0.5) / MILLI_PER_DEGREE,
    )
}

/// Ground extent of one grid cell at `lat` degrees, as `(north-south, east-west)` meters
/// on a spherical Earth.
pub fn cell_extent_meters(lat: f64) -> (f64, f64) {
    let arc = (1.0 / MILLI_PER_DEGREE).to_radians() * EARTH_RADIUS_M;
    (arc, arc * lat.to_radians().cos())
}
