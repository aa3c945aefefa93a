//! Streaming ingestion of delimiter-separated media metadata.
//!
//! Each line is parsed independently: rows whose longitude or latitude column
//! is empty are non-geotagged and skipped; rows with a present but malformed
//! coordinate are counted as parse errors (or abort the run in strict mode).
//! Plain and gzip inputs are supported; plain files can additionally be split
//! into line-aligned byte ranges and read in parallel.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom};
use std::ops::{AddAssign, Range};
use std::path::Path;
use std::sync::Arc;

use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoRecord {
    pub photo_id: String,
    pub user_id: String,
    pub lon: f64,
    pub lat: f64,
}

/// Closed latitude/longitude box. Boxes crossing the antimeridian are not supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    /// Default region: lat [34, 72], lon [−25, 45].
    pub const EUROPE: BoundingBox = BoundingBox {
        lat_min: 34.0,
        lat_max: 72.0,
        lon_min: -25.0,
        lon_max: 45.0,
    };

    pub const WORLD: BoundingBox = BoundingBox {
        lat_min: -90.0,
        lat_max: 90.0,
        lon_min: -180.0,
        lon_max: 180.0,
    };

    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self, ConfigError> {
        let b = BoundingBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        };
        b.validate()?;
        Ok(b)
    }

    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = [self.lat_min, self.lat_max, self.lon_min, self.lon_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.lat_min < self.lat_max) || !(self.lon_min < self.lon_max) {
            return Err(ConfigError::InvalidBoundingBox(*self));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        self.lat_min <= lat && lat <= self.lat_max && self.lon_min <= lon && lon <= self.lon_max
    }
}

impl Default for BoundingBox {
    fn default() -> Self {
        Self::EUROPE
    }
}

#[inline]
pub fn in_bbox(rec: &PhotoRecord, bbox: &BoundingBox) -> bool {
    bbox.contains(rec.lat, rec.lon)
}

/// Where the four used fields live in a row. Defaults follow the public
/// YFCC100M metadata layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnLayout {
    pub photo_id_col: usize,
    pub user_id_col: usize,
    pub lon_col: usize,
    pub lat_col: usize,
    pub delimiter: char,
}

impl ColumnLayout {
    pub fn new(
        photo_id_col: usize,
        user_id_col: usize,
        lon_col: usize,
        lat_col: usize,
        delimiter: char,
    ) -> Result<Self, ConfigError> {
        let l = ColumnLayout {
            photo_id_col,
            user_id_col,
            lon_col,
            lat_col,
            delimiter,
        };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let cols = [self.photo_id_col, self.user_id_col, self.lon_col, self.lat_col];
        for i in 0..cols.len() {
            for j in i + 1..cols.len() {
                if cols[i] == cols[j] {
                    return Err(ConfigError::DuplicateColumn(cols[i]));
                }
            }
        }
        if self.delimiter == '\n' || self.delimiter == '\r' {
            return Err(ConfigError::InvalidDelimiter(self.delimiter));
        }
        Ok(())
    }

    fn max_col(&self) -> usize {
        self.photo_id_col
            .max(self.user_id_col)
            .max(self.lon_col)
            .max(self.lat_col)
    }
}

impl Default for ColumnLayout {
    fn default() -> Self {
        ColumnLayout {
            photo_id_col: 0,
            user_id_col: 1,
            lon_col: 10,
            lat_col: 11,
            delimiter: '\t',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid bounding box {0:?}: need finite lat_min < lat_max and lon_min < lon_max")]
    InvalidBoundingBox(BoundingBox),
    #[error("column {0} is assigned to more than one field")]
    DuplicateColumn(usize),
    #[error("{0:?} cannot be used as a delimiter")]
    InvalidDelimiter(char),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("row has no column {0}")]
    MissingColumn(usize),
    #[error("malformed number {0:?}")]
    MalformedNumber(String),
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("empty user id")]
    EmptyUserId,
    #[error("row is not valid UTF-8")]
    InvalidUtf8,
}

/// A rejected row. `line` is 1-based; `column` is the zero-based field index
/// that failed.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}, column {column}: {kind}")]
pub struct ParseError {
    pub line: u64,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseOutcome {
    Record(PhotoRecord),
    /// Not geotagged.
    Skip,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error at byte offset {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: io::Error,
    },
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("parse error (strict mode) at byte offset {offset}: {error}")]
    Strict { offset: u64, error: ParseError },
}

/// Per-source counters. Merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub total_lines: u64,
    /// Rows with both coordinate columns non-empty, whether or not they parsed.
    pub geotagged: u64,
    pub in_box: u64,
    pub parse_errors: u64,
}

impl IngestStats {
    pub fn merge(mut self, other: IngestStats) -> IngestStats {
        self += other;
        self
    }
}

impl AddAssign for IngestStats {
    fn add_assign(&mut self, o: IngestStats) {
        self.total_lines += o.total_lines;
        self.geotagged += o.geotagged;
        self.in_box += o.in_box;
        self.parse_errors += o.parse_errors;
    }
}

fn parse_coord(field: &str, col: usize, line: u64) -> Result<f64, ParseError> {
    let err = |kind| ParseError { line, column: col, kind };
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| err(ParseErrorKind::MalformedNumber(field.to_string())))?;
    if !v.is_finite() {
        return Err(err(ParseErrorKind::MalformedNumber(field.to_string())));
    }
    Ok(v)
}

/// Parses one row. `line_no` is only used to label errors.
pub fn parse_line(line: &str, line_no: u64, layout: &ColumnLayout) -> Result<ParseOutcome, ParseError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.is_empty() {
        return Ok(ParseOutcome::Skip);
    }

    let mut fields: [Option<&str>; 4] = [None; 4];
    let wanted = [layout.photo_id_col, layout.user_id_col, layout.lon_col, layout.lat_col];
    let max_col = layout.max_col();
    for (i, f) in line.split(layout.delimiter).enumerate().take(max_col + 1) {
        for (slot, &col) in wanted.iter().enumerate() {
            if col == i {
                fields[slot] = Some(f);
            }
        }
    }
    let missing = |slot: usize| ParseError {
        line: line_no,
        column: wanted[slot],
        kind: ParseErrorKind::MissingColumn(wanted[slot]),
    };

    let lon_raw = fields[2].ok_or_else(|| missing(2))?;
    let lat_raw = fields[3].ok_or_else(|| missing(3))?;
    if lon_raw.trim().is_empty() || lat_raw.trim().is_empty() {
        return Ok(ParseOutcome::Skip);
    }

    let lon = parse_coord(lon_raw, layout.lon_col, line_no)?;
    let lat = parse_coord(lat_raw, layout.lat_col, line_no)?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(ParseError {
            line: line_no,
            column: layout.lat_col,
            kind: ParseErrorKind::LatitudeOutOfRange(lat),
        });
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(ParseError {
            line: line_no,
            column: layout.lon_col,
            kind: ParseErrorKind::LongitudeOutOfRange(lon),
        });
    }

    let photo_id = fields[0].ok_or_else(|| missing(0))?;
    let user_id = fields[1].ok_or_else(|| missing(1))?;
    if user_id.is_empty() {
        return Err(ParseError {
            line: line_no,
            column: layout.user_id_col,
            kind: ParseErrorKind::EmptyUserId,
        });
    }

    Ok(ParseOutcome::Record(PhotoRecord {
        photo_id: photo_id.to_string(),
        user_id: user_id.to_string(),
        lon,
        lat,
    }))
}

/// Whether both coordinate columns are present and non-empty.
fn has_geo(line: &str, layout: &ColumnLayout) -> bool {
    let line = line.trim_end_matches(['\n', '\r']);
    let mut lon = false;
    let mut lat = false;
    for (i, f) in line.split(layout.delimiter).enumerate() {
        if i == layout.lon_col {
            lon = !f.trim().is_empty();
        }
        if i == layout.lat_col {
            lat = !f.trim().is_empty();
        }
        if i >= layout.lon_col.max(layout.lat_col) {
            break;
        }
    }
    lon && lat
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestOptions {
    pub layout: ColumnLayout,
    pub bbox: BoundingBox,
    pub strict: bool,
}

type ProgressHook = Box<dyn FnMut(&IngestStats) + Send>;

/// Iterator over the in-box records of a line source.
///
/// Yields `Err` once on an I/O error (or a parse error in strict mode) and then
/// stops. Counters accumulate in [`RecordReader::stats`].
pub struct RecordReader<R> {
    source: R,
    opts: IngestOptions,
    stats: IngestStats,
    offset: u64,
    buf: Vec<u8>,
    done: bool,
    progress: Option<(u64, ProgressHook)>,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(source: R, opts: IngestOptions) -> Self {
        RecordReader {
            source,
            opts,
            stats: IngestStats::default(),
            offset: 0,
            buf: Vec::with_capacity(512),
            done: false,
            progress: None,
        }
    }

    /// Starts byte offsets (used in diagnostics) at `offset`.
    pub fn with_base_offset(mut self, offset: u64) -> Self {
        self.offset = offset;
        self
    }

    /// Calls `hook` every `every` lines.
    pub fn with_progress(mut self, every: u64, hook: impl FnMut(&IngestStats) + Send + 'static) -> Self {
        self.progress = Some((every.max(1), Box::new(hook)));
        self
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    fn next_inner(&mut self) -> Option<Result<PhotoRecord, IngestError>> {
        loop {
            self.buf.clear();
            let line_offset = self.offset;
            let n = match self.source.read_until(b'\n', &mut self.buf) {
                Ok(n) => n,
                Err(source) => {
                    return Some(Err(IngestError::Io {
                        offset: line_offset,
                        source,
                    }))
                }
            };
            if n == 0 {
                return None;
            }
            self.offset += n as u64;
            self.stats.total_lines += 1;
            let line_no = self.stats.total_lines;
            if let Some((every, hook)) = self.progress.as_mut() {
                if line_no.is_multiple_of(*every) {
                    hook(&self.stats);
                }
            }

            let outcome = match std::str::from_utf8(&self.buf) {
                Ok(line) => {
                    if has_geo(line, &self.opts.layout) {
                        self.stats.geotagged += 1;
                    }
                    parse_line(line, line_no, &self.opts.layout)
                }
                Err(_) => {
                    let lossy = String::from_utf8_lossy(&self.buf);
                    if has_geo(&lossy, &self.opts.layout) {
                        self.stats.geotagged += 1;
                    }
                    Err(ParseError {
                        line: line_no,
                        column: 0,
                        kind: ParseErrorKind::InvalidUtf8,
                    })
                }
            };

            match outcome {
                Ok(ParseOutcome::Record(rec)) => {
                    if in_bbox(&rec, &self.opts.bbox) {
                        self.stats.in_box += 1;
                        return Some(Ok(rec));
                    }
                }
                Ok(ParseOutcome::Skip) => {}
                Err(error) => {
                    self.stats.parse_errors += 1;
                    if self.opts.strict {
                        return Some(Err(IngestError::Strict {
                            offset: line_offset,
                            error,
                        }));
                    }
                }
            }
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<PhotoRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let item = self.next_inner();
        if !matches!(item, Some(Ok(_))) {
            self.done = true;
        }
        item
    }
}

pub fn ingest_stream<R: BufRead>(source: R, opts: IngestOptions) -> RecordReader<R> {
    RecordReader::new(source, opts)
}

fn open_err(path: &Path) -> impl FnOnce(io::Error) -> IngestError + '_ {
    move |source| IngestError::Open {
        path: path.display().to_string(),
        source,
    }
}

pub fn is_gzip(path: &Path) -> Result<bool, IngestError> {
    let mut f = File::open(path).map_err(open_err(path))?;
    let mut magic = [0u8; 2];
    let mut got = 0;
    while got < 2 {
        match f.read(&mut magic[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(open_err(path)(e)),
        }
    }
    Ok(got == 2 && magic == [0x1f, 0x8b])
}

/// Opens a plain or gzip file (detected by magic bytes) as a line source.
pub fn open_input(path: &Path) -> Result<Box<dyn BufRead + Send>, IngestError> {
    let gz = is_gzip(path)?;
    let f = File::open(path).map_err(open_err(path))?;
    if gz {
        Ok(Box::new(BufReader::with_capacity(1 << 16, MultiGzDecoder::new(f))))
    } else {
        Ok(Box::new(BufReader::with_capacity(1 << 16, f)))
    }
}

/// Splits a plain file into at most `shards` byte ranges that start at line starts.
pub fn shard_ranges(path: &Path, shards: usize) -> Result<Vec<Range<u64>>, IngestError> {
    let mut f = File::open(path).map_err(open_err(path))?;
    let len = f.metadata().map_err(open_err(path))?.len();
    let shards = shards.max(1) as u64;
    let mut bounds = vec![0u64];
    let mut byte = [0u8; 1];
    for i in 1..shards {
        let target = len * i / shards;
        let prev = *bounds.last().unwrap();
        if target <= prev {
            continue;
        }
        // Find the first line start at or after `target`.
        let io_err = |source| IngestError::Io { offset: target, source };
        f.seek(SeekFrom::Start(target - 1)).map_err(io_err)?;
        let mut pos = target - 1;
        loop {
            match f.read(&mut byte) {
                Ok(0) => {
                    pos = len;
                    break;
                }
                Ok(_) => {
                    pos += 1;
                    if byte[0] == b'\n' {
                        break;
                    }
                }
                Err(e) => return Err(IngestError::Io { offset: pos, source: e }),
            }
        }
        if pos > prev && pos < len {
            bounds.push(pos);
        }
    }
    bounds.push(len);
    Ok(bounds.windows(2).map(|w| w[0]..w[1]).collect())
}

/// Called with a line-count increment as shards make progress.
pub type LineProgress = Arc<dyn Fn(u64) + Send + Sync>;

/// Reads a file in parallel, folding the records of each shard into its own
/// accumulator. Accumulators are returned in file order. Gzip files are read
/// as a single shard.
///
/// `progress`, when given as `(every, hook)`, calls `hook(every)` each time a
/// shard has read another `every` lines.
pub fn ingest_file_sharded<A, I, F>(
    path: &Path,
    opts: IngestOptions,
    shards: usize,
    progress: Option<(u64, LineProgress)>,
    init: I,
    fold: F,
) -> Result<(Vec<A>, IngestStats), IngestError>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, PhotoRecord) + Sync,
{
    let ranges = if is_gzip(path)? {
        vec![]
    } else {
        shard_ranges(path, shards)?
    };

    let attach = |reader: RecordReader<_>| match &progress {
        Some((every, hook)) => {
            let (every, hook) = (*every, Arc::clone(hook));
            reader.with_progress(every, move |_| hook(every))
        }
        None => reader,
    };

    if ranges.len() <= 1 {
        let mut acc = init();
        let mut reader = RecordReader::new(open_input(path)?, opts);
        if let Some((every, hook)) = &progress {
            let (every, hook) = (*every, Arc::clone(hook));
            reader = reader.with_progress(every, move |_| hook(every));
        }
        for rec in reader.by_ref() {
            fold(&mut acc, rec?);
        }
        return Ok((vec![acc], reader.stats()));
    }

    let results: Vec<Result<(A, IngestStats), IngestError>> = ranges
        .par_iter()
        .map(|range| {
            let mut f = File::open(path).map_err(open_err(path))?;
            f.seek(SeekFrom::Start(range.start)).map_err(|source| IngestError::Io {
                offset: range.start,
                source,
            })?;
            let src = BufReader::with_capacity(1 << 16, f.take(range.end - range.start));
            let mut reader = attach(RecordReader::new(src, opts).with_base_offset(range.start));
            let mut acc = init();
            for rec in reader.by_ref() {
                fold(&mut acc, rec?);
            }
            Ok((acc, reader.stats()))
        })
        .collect();

    let mut accs = Vec::with_capacity(results.len());
    let mut total = IngestStats::default();
    for r in results {
        match r {
            Ok((acc, stats)) => {
                accs.push(acc);
                total += stats;
            }
            Err(IngestError::Strict { offset, mut error }) => {
                // Line numbers are shard-relative; shift by the lines before this shard.
                error.line += total.total_lines;
                return Err(IngestError::Strict { offset, error });
            }
            Err(e) => return Err(e),
        }
    }
    Ok((accs, total))
}
