//! Projection of the user–location relation onto locations.
//!
//! 1. [`collect_visits`] reduces photos to the distinct cells each user visited.
//! 2. [`emit_pairs`] lists every unordered pair of cells in one user's set.
//! 3. [`PairAggregator`] counts how often each pair occurs across users. Since
//!    a user contributes a pair at most once, that count is the number of
//!    distinct users who visited both cells. Pairs below
//!    [`BuildConfig::min_users_per_edge`] are dropped.
//!
//! Pair keys are buffered in memory up to the configured budget. When the
//! buffer fills it is sorted, run-length counted, and spilled to a temporary
//! run file; at the end all runs are merged in key order. Either path yields
//! the same edge stream, sorted by canonical key.
//!
//! Spill run format: a sequence of little-endian records
//! `(u: u64 packed LocationId, v: u64 packed LocationId, count: u32)`,
//! 20 bytes each, strictly increasing in `(u, v)`.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::PathBuf;

use rayon::slice::ParallelSliceMut;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CoVisGraph, GraphError};
use crate::ingest::PhotoRecord;
use crate::quantize::{quantize, LocationId};

pub const SPILL_RECORD_BYTES: usize = 20;
const KEY_BYTES: u64 = std::mem::size_of::<u128>() as u64;

/// One undirected edge in canonical form (`u < v`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WeightedEdge {
    pub u: LocationId,
    pub v: LocationId,
    /// Number of distinct users who visited both endpoints.
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub min_users_per_edge: u32,
    /// Users with more distinct locations than this are excluded entirely.
    pub max_locations_per_user: Option<usize>,
    /// In-memory pair buffer budget before spilling sorted runs to disk.
    pub memory_budget_bytes: u64,
    /// Directory for spill runs; the system temp dir when unset.
    pub spill_dir: Option<PathBuf>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            min_users_per_edge: 2,
            max_locations_per_user: None,
            memory_budget_bytes: 1 << 30,
            spill_dir: None,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        if self.min_users_per_edge < 1 {
            return Err(BuildError::InvalidConfig("min_users_per_edge must be at least 1".into()));
        }
        if self.max_locations_per_user == Some(0) {
            return Err(BuildError::InvalidConfig("max_locations_per_user must be at least 1".into()));
        }
        Ok(())
    }

    fn buffer_capacity(&self) -> usize {
        (self.memory_budget_bytes / KEY_BYTES).clamp(1, usize::MAX as u64) as usize
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("invalid build configuration: {0}")]
    InvalidConfig(String),
    #[error("spill I/O failed while {context}: {source}")]
    Spill {
        context: &'static str,
        #[source]
        source: io::Error,
    },
    #[error("spill run is corrupt: {0}")]
    CorruptRun(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn spill_err(context: &'static str) -> impl FnOnce(io::Error) -> BuildError {
    move |source| BuildError::Spill { context, source }
}

/// The distinct cells one user visited, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserVisitSet {
    pub user_id: String,
    pub locations: Vec<LocationId>,
}

impl UserVisitSet {
    pub fn new(user_id: impl Into<String>, locations: impl IntoIterator<Item = LocationId>) -> Self {
        let mut locations: Vec<LocationId> = locations.into_iter().collect();
        locations.sort_unstable();
        locations.dedup();
        UserVisitSet {
            user_id: user_id.into(),
            locations,
        }
    }
}

/// Accumulates per-user visited cells. Merging collectors is associative and
/// commutative, so shards can collect independently.
#[derive(Debug, Default, Clone)]
pub struct VisitCollector {
    users: HashMap<String, HashSet<LocationId>>,
}

impl VisitCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, rec: &PhotoRecord) {
        let cell = quantize(rec.lat, rec.lon);
        match self.users.get_mut(rec.user_id.as_str()) {
            Some(set) => {
                set.insert(cell);
            }
            None => {
                self.users.insert(rec.user_id.clone(), HashSet::from([cell]));
            }
        }
    }

    pub fn merge(&mut self, other: VisitCollector) {
        for (user, cells) in other.users {
            match self.users.entry(user) {
                Entry::Occupied(mut e) => e.get_mut().extend(cells),
                Entry::Vacant(e) => {
                    e.insert(cells);
                }
            }
        }
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    /// One set per user, ordered by user id.
    pub fn finish(self) -> Vec<UserVisitSet> {
        let mut out: Vec<UserVisitSet> = self
            .users
            .into_iter()
            .map(|(user, cells)| UserVisitSet::new(user, cells))
            .collect();
        out.sort_unstable_by(|a, b| a.user_id.cmp(&b.user_id));
        out
    }
}

pub fn collect_visits<I>(records: I) -> Vec<UserVisitSet>
where
    I: IntoIterator<Item = PhotoRecord>,
{
    let mut c = VisitCollector::new();
    for rec in records {
        c.push(&rec);
    }
    c.finish()
}

/// All `C(n, 2)` canonical pairs of one user's locations.
pub fn emit_pairs(visits: &UserVisitSet) -> PairIter<'_> {
    PairIter {
        locs: &visits.locations,
        i: 0,
        j: 1,
    }
}

pub struct PairIter<'a> {
    locs: &'a [LocationId],
    i: usize,
    j: usize,
}

impl Iterator for PairIter<'_> {
    type Item = (LocationId, LocationId);

    fn next(&mut self) -> Option<Self::Item> {
        if self.j >= self.locs.len() {
            self.i += 1;
            self.j = self.i + 1;
            if self.j >= self.locs.len() {
                return None;
            }
        }
        let pair = (self.locs[self.i], self.locs[self.j]);
        self.j += 1;
        Some(pair)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.locs.len();
        if self.i >= n {
            return (0, Some(0));
        }
        // Remaining in the current row plus all later rows.
        let row = n.saturating_sub(self.j);
        let later = n.saturating_sub(self.i + 1);
        let rest = later * later.saturating_sub(1) / 2;
        (row + rest, Some(row + rest))
    }
}

#[inline]
fn pair_key(u: LocationId, v: LocationId) -> u128 {
    (u128::from(u.pack()) << 64) | u128::from(v.pack())
}

#[inline]
fn key_edge(key: u128, weight: u32) -> WeightedEdge {
    WeightedEdge {
        u: LocationId::unpack((key >> 64) as u64),
        v: LocationId::unpack(key as u64),
        weight,
    }
}

/// Counts canonical pairs, spilling sorted runs once the memory budget is exceeded.
pub struct PairAggregator {
    cfg: BuildConfig,
    capacity: usize,
    buffer: Vec<u128>,
    runs: Vec<File>,
    pairs_pushed: u64,
}

impl PairAggregator {
    pub fn new(cfg: BuildConfig) -> Result<Self, BuildError> {
        cfg.validate()?;
        let capacity = cfg.buffer_capacity();
        Ok(PairAggregator {
            cfg,
            capacity,
            buffer: Vec::new(),
            runs: Vec::new(),
            pairs_pushed: 0,
        })
    }

    /// Adds one canonical pair (`u < v`).
    pub fn push(&mut self, u: LocationId, v: LocationId) -> Result<(), BuildError> {
        debug_assert!(u < v, "pair ({u}, {v}) is not canonical");
        if self.buffer.len() == self.buffer.capacity() {
            if self.buffer.len() >= self.capacity {
                self.spill()?;
            } else {
                let want = (self.buffer.capacity().max(1024) * 2).min(self.capacity);
                self.buffer.reserve_exact(want - self.buffer.len());
            }
        }
        self.buffer.push(pair_key(u, v));
        self.pairs_pushed += 1;
        Ok(())
    }

    pub fn pairs_pushed(&self) -> u64 {
        self.pairs_pushed
    }

    pub fn spill_runs(&self) -> usize {
        self.runs.len()
    }

    fn sort_buffer(&mut self) {
        self.buffer.par_sort_unstable();
    }

    fn spill(&mut self) -> Result<(), BuildError> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        self.sort_buffer();
        let file = match &self.cfg.spill_dir {
            Some(dir) => tempfile::tempfile_in(dir),
            None => tempfile::tempfile(),
        }
        .map_err(spill_err("creating a run file"))?;
        let mut w = BufWriter::with_capacity(1 << 20, file);
        for (key, count) in RunLength::new(&self.buffer) {
            write_run_record(&mut w, key, count).map_err(spill_err("writing a run"))?;
        }
        let mut file = w
            .into_inner()
            .map_err(|e| BuildError::Spill {
                context: "flushing a run",
                source: e.into_error(),
            })?;
        file.seek(SeekFrom::Start(0)).map_err(spill_err("rewinding a run"))?;
        self.runs.push(file);
        self.buffer.clear();
        Ok(())
    }

    /// Finishes counting and returns the thresholded edges in canonical order.
    pub fn finish(mut self) -> Result<EdgeStream, BuildError> {
        let min = self.cfg.min_users_per_edge;
        if self.runs.is_empty() {
            self.sort_buffer();
            let counted: Vec<(u128, u32)> = RunLength::new(&self.buffer).filter(|&(_, c)| c >= min).collect();
            return Ok(EdgeStream {
                inner: StreamInner::Memory(counted.into_iter()),
                min_users: min,
            });
        }
        self.spill()?;
        self.buffer = Vec::new();
        let mut readers = Vec::with_capacity(self.runs.len());
        let mut heap = BinaryHeap::with_capacity(self.runs.len());
        for (idx, file) in self.runs.drain(..).enumerate() {
            let mut r = RunReader::new(file);
            if let Some((key, count)) = r.next_record()? {
                heap.push(Reverse((key, idx, count)));
            }
            readers.push(r);
        }
        Ok(EdgeStream {
            inner: StreamInner::Merge { readers, heap },
            min_users: min,
        })
    }
}

fn write_run_record(w: &mut impl Write, key: u128, count: u32) -> io::Result<()> {
    w.write_all(&((key >> 64) as u64).to_le_bytes())?;
    w.write_all(&(key as u64).to_le_bytes())?;
    w.write_all(&count.to_le_bytes())
}

/// Run-length counts over a sorted key slice.
struct RunLength<'a> {
    keys: &'a [u128],
    pos: usize,
}

impl<'a> RunLength<'a> {
    fn new(keys: &'a [u128]) -> Self {
        RunLength { keys, pos: 0 }
    }
}

impl Iterator for RunLength<'_> {
    type Item = (u128, u32);

    fn next(&mut self) -> Option<Self::Item> {
        let key = *self.keys.get(self.pos)?;
        let start = self.pos;
        while self.pos < self.keys.len() && self.keys[self.pos] == key {
            self.pos += 1;
        }
        Some((key, u32::try_from(self.pos - start).unwrap_or(u32::MAX)))
    }
}

struct RunReader {
    inner: BufReader<File>,
    last: Option<u128>,
}

impl RunReader {
    fn new(file: File) -> Self {
        RunReader {
            inner: BufReader::with_capacity(1 << 16, file),
            last: None,
        }
    }

    fn next_record(&mut self) -> Result<Option<(u128, u32)>, BuildError> {
        let mut buf = [0u8; SPILL_RECORD_BYTES];
        let mut got = 0;
        while got < SPILL_RECORD_BYTES {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(spill_err("reading a run")(e)),
            }
        }
        if got == 0 {
            return Ok(None);
        }
        if got < SPILL_RECORD_BYTES {
            return Err(BuildError::CorruptRun(format!("truncated record ({got} bytes)")));
        }
        let u = u64::from_le_bytes(buf[0..8].try_into().unwrap());
        let v = u64::from_le_bytes(buf[8..16].try_into().unwrap());
        let count = u32::from_le_bytes(buf[16..20].try_into().unwrap());
        let key = (u128::from(u) << 64) | u128::from(v);
        if self.last.is_some_and(|last| last >= key) {
            return Err(BuildError::CorruptRun("keys are not strictly increasing".into()));
        }
        self.last = Some(key);
        Ok(Some((key, count)))
    }
}

enum StreamInner {
    Memory(std::vec::IntoIter<(u128, u32)>),
    Merge {
        readers: Vec<RunReader>,
        heap: BinaryHeap<Reverse<(u128, usize, u32)>>,
    },
}

/// Thresholded edges in canonical order; yields `Err` once if a spill run fails to read.
pub struct EdgeStream {
    inner: StreamInner,
    min_users: u32,
}

impl EdgeStream {
    fn merge_next(
        readers: &mut [RunReader],
        heap: &mut BinaryHeap<Reverse<(u128, usize, u32)>>,
    ) -> Result<Option<(u128, u32)>, BuildError> {
        let Some(Reverse((key, idx, count))) = heap.pop() else {
            return Ok(None);
        };
        let mut total = count;
        let mut refill = |idx: usize, heap: &mut BinaryHeap<_>| -> Result<(), BuildError> {
            if let Some((k, c)) = readers[idx].next_record()? {
                heap.push(Reverse((k, idx, c)));
            }
            Ok(())
        };
        refill(idx, heap)?;
        while let Some(&Reverse((k, i, c))) = heap.peek() {
            if k != key {
                break;
            }
            heap.pop();
            total = total.saturating_add(c);
            refill(i, heap)?;
        }
        Ok(Some((key, total)))
    }
}

impl Iterator for EdgeStream {
    type Item = Result<WeightedEdge, BuildError>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            StreamInner::Memory(it) => it.next().map(|(k, c)| Ok(key_edge(k, c))),
            StreamInner::Merge { readers, heap } => loop {
                match Self::merge_next(readers, heap) {
                    Ok(Some((k, c))) if c >= self.min_users => return Some(Ok(key_edge(k, c))),
                    Ok(Some(_)) => continue,
                    Ok(None) => return None,
                    Err(e) => {
                        heap.clear();
                        return Some(Err(e));
                    }
                }
            },
        }
    }
}

/// Counts canonical pairs and yields thresholded edges.
pub fn aggregate_pairs<I>(pairs: I, cfg: &BuildConfig) -> Result<EdgeStream, BuildError>
where
    I: IntoIterator<Item = (LocationId, LocationId)>,
{
    let mut agg = PairAggregator::new(cfg.clone())?;
    for (u, v) in pairs {
        agg.push(u, v)?;
    }
    agg.finish()
}

/// Counters reported by a build.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub users: u64,
    pub users_capped: u64,
    pub distinct_locations_seen: u64,
    pub pairs_emitted: u64,
    pub edges_kept: u64,
    pub spill_runs: u64,
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "M")]
    pub m: u64,
}

/// Projects already-collected visit sets into a graph.
pub fn build_from_visits(visits: &[UserVisitSet], cfg: &BuildConfig) -> Result<(CoVisGraph, BuildStats), BuildError> {
    let mut agg = PairAggregator::new(cfg.clone())?;
    let mut stats = BuildStats {
        users: visits.len() as u64,
        ..Default::default()
    };
    let mut seen: HashSet<LocationId> = HashSet::new();
    for user in visits {
        seen.extend(user.locations.iter().copied());
        if cfg.max_locations_per_user.is_some_and(|cap| user.locations.len() > cap) {
            stats.users_capped += 1;
            continue;
        }
        for (u, v) in emit_pairs(user) {
            agg.push(u, v)?;
        }
    }
    stats.distinct_locations_seen = seen.len() as u64;
    drop(seen);
    stats.pairs_emitted = agg.pairs_pushed();

    let edges: Vec<WeightedEdge> = agg.finish_counting(&mut stats)?;
    stats.edges_kept = edges.len() as u64;
    let graph = CoVisGraph::from_edges(edges)?;
    stats.n = graph.n() as u64;
    stats.m = graph.m() as u64;
    Ok((graph, stats))
}

impl PairAggregator {
    fn finish_counting(self, stats: &mut BuildStats) -> Result<Vec<WeightedEdge>, BuildError> {
        let stream = self.finish()?;
        stats.spill_runs = match &stream.inner {
            StreamInner::Memory(_) => 0,
            StreamInner::Merge { readers, .. } => readers.len() as u64,
        };
        stream.collect()
    }
}

/// Builds the co-visitation graph from raw records.
pub fn build_graph<I>(records: I, cfg: &BuildConfig) -> Result<(CoVisGraph, BuildStats), BuildError>
where
    I: IntoIterator<Item = PhotoRecord>,
{
    cfg.validate()?;
    build_from_visits(&collect_visits(records), cfg)
}
