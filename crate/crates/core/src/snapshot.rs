//! Binary graph snapshot.
//!
//! All integers are little-endian.
//!
//! | field      | type              | notes                          |
//! |------------|-------------------|--------------------------------|
//! | magic      | 8 bytes           | `b"COVISNET"`                  |
//! | version    | u32               | currently 1                    |
//! | reserved   | u32               | 0                              |
//! | N          | u64               | vertex count                   |
//! | M          | u64               | undirected edge count          |
//! | vertices   | N × u64           | packed `LocationId`, ascending |
//! | offsets    | (N + 1) × u64     | CSR row offsets                |
//! | neighbors  | 2M × u32          | vertex indices                 |
//! | weights    | 2M × u32          | parallel to `neighbors`        |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::graph::CoVisGraph;
use crate::quantize::LocationId;

pub const MAGIC: &[u8; 8] = b"COVISNET";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a graph snapshot (bad magic bytes)")]
    BadMagic,
    #[error("snapshot version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

pub fn write_snapshot<W: Write>(g: &CoVisGraph, w: W) -> io::Result<()> {
    let mut w = BufWriter::with_capacity(1 << 20, w);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&(g.n() as u64).to_le_bytes())?;
    w.write_all(&(g.m() as u64).to_le_bytes())?;
    for v in &g.vertices {
        w.write_all(&v.pack().to_le_bytes())?;
    }
    for o in &g.offsets {
        w.write_all(&o.to_le_bytes())?;
    }
    for x in &g.neighbors {
        w.write_all(&x.to_le_bytes())?;
    }
    for x in &g.weights {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

pub fn save_snapshot(g: &CoVisGraph, path: &Path) -> io::Result<()> {
    write_snapshot(g, File::create(path)?)
}

fn read_u32<R: Read + ?Sized>(r: &mut R) -> Result<u32, SnapshotError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read + ?Sized>(r: &mut R) -> Result<u64, SnapshotError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: io::Error) -> SnapshotError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        SnapshotError::Corrupt("truncated".into())
    } else {
        SnapshotError::Io(e)
    }
}

fn read_vec<T>(r: &mut impl Read, len: u64, read: impl Fn(&mut dyn Read) -> Result<T, SnapshotError>) -> Result<Vec<T>, SnapshotError> {
    // Grow as data arrives so a corrupt length cannot force a huge allocation.
    let mut out = Vec::with_capacity(len.min(1 << 20) as usize);
    for _ in 0..len {
        out.push(read(r)?);
    }
    Ok(out)
}

/// Reads and validates a snapshot.
pub fn read_snapshot<R: Read>(r: R) -> Result<CoVisGraph, SnapshotError> {
    let mut r = BufReader::with_capacity(1 << 20, r);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => SnapshotError::BadMagic,
        _ => SnapshotError::Io(e),
    })?;
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(SnapshotError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let _reserved = read_u32(&mut r)?;
    let n = read_u64(&mut r)?;
    let m = read_u64(&mut r)?;
    if n > u64::from(u32::MAX) {
        return Err(SnapshotError::Corrupt(format!("vertex count {n} too large")));
    }
    let entries = m
        .checked_mul(2)
        .ok_or_else(|| SnapshotError::Corrupt(format!("edge count {m} too large")))?;

    let vertices = read_vec(&mut r, n, |r| {
        let key = read_u64(r)?;
        LocationId::try_unpack(key).ok_or_else(|| SnapshotError::Corrupt(format!("invalid vertex key {key:#x}")))
    })?;
    let offsets = read_vec(&mut r, n + 1, |r| read_u64(r))?;
    let neighbors = read_vec(&mut r, entries, |r| read_u32(r))?;
    let weights = read_vec(&mut r, entries, |r| read_u32(r))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(SnapshotError::Corrupt("trailing bytes".into()));
    }

    let g = CoVisGraph {
        vertices,
        offsets,
        neighbors,
        weights,
    };
    g.validate().map_err(SnapshotError::Corrupt)?;
    Ok(g)
}

pub fn load_snapshot(path: &Path) -> Result<CoVisGraph, SnapshotError> {
    read_snapshot(File::open(path)?)
}
