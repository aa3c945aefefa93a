//! Seeded synthetic photo metadata for smoke tests and benchmarks.
//!
//! Users and places both have heavy-tailed popularity: a few users upload
//! most photos and a few places attract most visits, which is what makes
//! per-user pair emission expensive on real data.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{BoundingBox, PhotoRecord};
use crate::quantize::{LocationId, MILLI_PER_DEGREE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub records: u64,
    pub users: u64,
    pub places: u64,
    /// Zipf exponent of user activity.
    pub user_skew: f64,
    /// Zipf exponent of place popularity.
    pub place_skew: f64,
    /// Probability that a photo is taken at one of the user's own haunts
    /// rather than a globally popular place.
    pub local_share: f64,
    /// Distinct haunts per user.
    pub haunts: u64,
    pub bbox: BoundingBox,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            records: 1_000_000,
            users: 10_000,
            places: 50_000,
            user_skew: 0.7,
            place_skew: 1.2,
            local_share: 0.3,
            haunts: 20,
            bbox: BoundingBox::EUROPE,
            seed: 42,
        }
    }
}

/// Inverse-CDF sampler over `0..n` with weights `(i + 1)^(−s)`.
struct Zipf {
    cdf: Vec<f64>,
}

impl Zipf {
    fn new(n: u64, s: f64) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (0..n.max(1))
            .map(|i| {
                acc += ((i + 1) as f64).powf(-s);
                acc
            })
            .collect();
        for c in &mut cdf {
            *c /= acc;
        }
        Zipf { cdf }
    }

    fn sample(&self, rng: &mut impl Rng) -> u64 {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1) as u64
    }
}

/// Streaming generator; yields exactly `cfg.records` records.
pub struct SyntheticRecords {
    cfg: SyntheticConfig,
    rng: ChaCha8Rng,
    users: Zipf,
    places: Zipf,
    cells: Vec<LocationId>,
    emitted: u64,
}

impl SyntheticRecords {
    pub fn new(cfg: SyntheticConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let b = cfg.bbox;
        let to_milli = |d: f64| (d * MILLI_PER_DEGREE).floor() as i32;
        let (lat_lo, lat_hi) = (to_milli(b.lat_min), to_milli(b.lat_max) - 1);
        let (lon_lo, lon_hi) = (to_milli(b.lon_min), to_milli(b.lon_max) - 1);
        let cells = (0..cfg.places.max(1))
            .map(|_| {
                LocationId::new(rng.random_range(lat_lo..=lat_hi), rng.random_range(lon_lo..=lon_hi))
                    .expect("box lies on the grid")
            })
            .collect();
        SyntheticRecords {
            users: Zipf::new(cfg.users, cfg.user_skew),
            places: Zipf::new(cfg.places, cfg.place_skew),
            cells,
            rng,
            emitted: 0,
            cfg,
        }
    }

    fn haunt(&self, user: u64, slot: u64) -> u64 {
        // SplitMix64 of (user, slot): a fixed pseudo-random place per haunt.
        let mut z = user
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(slot.wrapping_mul(0xBF58_476D_1CE4_E5B9))
            ^ self.cfg.seed;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        z % self.cfg.places.max(1)
    }
}

impl Iterator for SyntheticRecords {
    type Item = PhotoRecord;

    fn next(&mut self) -> Option<PhotoRecord> {
        if self.emitted >= self.cfg.records {
            return None;
        }
        let user = self.users.sample(&mut self.rng);
        let place = if self.rng.random_bool(self.cfg.local_share.clamp(0.0, 1.0)) {
            let slot = self.rng.random_range(0..self.cfg.haunts.max(1));
            self.haunt(user, slot)
        } else {
            self.places.sample(&mut self.rng)
        };
        let cell = self.cells[place as usize];
        // Stay well inside the cell so quantization is unambiguous.
        let jitter_lat: f64 = self.rng.random_range(0.05..0.95);
        let jitter_lon: f64 = self.rng.random_range(0.05..0.95);
        let rec = PhotoRecord {
            photo_id: self.emitted.to_string(),
            user_id: format!("{user}@N00"),
            lat: (f64::from(cell.lat_milli) + jitter_lat) / MILLI_PER_DEGREE,
            lon: (f64::from(cell.lon_milli) + jitter_lon) / MILLI_PER_DEGREE,
        };
        self.emitted += 1;
        Some(rec)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.cfg.records - self.emitted) as usize;
        (left, Some(left))
    }
}

/// Writes one record as a 12-column row in the default column layout.
pub fn write_record_tsv<W: Write>(w: &mut W, rec: &PhotoRecord) -> io::Result<()> {
    writeln!(
        w,
        "{}\t{}\t\t\t\t\t\t\t\t\t{:.6}\t{:.6}",
        rec.photo_id, rec.user_id, rec.lon, rec.lat
    )
}

pub fn write_tsv<W: Write>(cfg: SyntheticConfig, w: W) -> io::Result<u64> {
    let mut w = io::BufWriter::new(w);
    let mut n = 0;
    for rec in SyntheticRecords::new(cfg) {
        write_record_tsv(&mut w, &rec)?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}
