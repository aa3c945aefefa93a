use std::io::Write;

use covisnet::build::{build_from_visits, collect_visits, VisitCollector};
use covisnet::ingest::{ingest_file_sharded, ingest_stream, shard_ranges, IngestOptions, ParseErrorKind};
use covisnet::snapshot::write_snapshot;
use covisnet::synth::{write_tsv, SyntheticConfig};
use covisnet::{BoundingBox, BuildConfig, IngestError, IngestStats, PhotoRecord};
use flate2::write::GzEncoder;
use flate2::Compression;
use proptest::prelude::*;

const FIVE: &str = include_str!("fixtures/ingest_five_lines.tsv");
const THREE_USERS: &str = include_str!("fixtures/three_users.tsv");

fn read_all(text: &str, opts: IngestOptions) -> (Vec<PhotoRecord>, IngestStats) {
    let mut r = ingest_stream(text.as_bytes(), opts);
    let recs = r.by_ref().collect::<Result<Vec<_>, _>>().unwrap();
    (recs, r.stats())
}

fn stats(total_lines: u64, geotagged: u64, in_box: u64, parse_errors: u64) -> IngestStats {
    IngestStats {
        total_lines,
        geotagged,
        in_box,
        parse_errors,
    }
}

#[test]
fn five_line_fixture() {
    let (recs, s) = read_all(FIVE, IngestOptions::default());
    assert_eq!(s, stats(5, 3, 2, 1));
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0].lon, 7.6869);
    assert_eq!(recs[1].lat, 48.8584);
}

#[test]
fn three_user_fixture_counts() {
    let (recs, s) = read_all(THREE_USERS, IngestOptions::default());
    assert_eq!(s, stats(12, 10, 9, 0));
    assert_eq!(recs.len(), 9);
    let world = IngestOptions {
        bbox: BoundingBox::WORLD,
        ..Default::default()
    };
    assert_eq!(read_all(THREE_USERS, world).1.in_box, 10);
}

#[test]
fn empty_and_duplicated_input() {
    assert_eq!(read_all("", IngestOptions::default()), (vec![], IngestStats::default()));
    let line = THREE_USERS.lines().next().unwrap();
    let (recs, s) = read_all(&format!("{line}\n{line}\n{line}\n"), IngestOptions::default());
    assert_eq!(recs.len(), 3);
    assert_eq!(s, stats(3, 3, 3, 0));
}

#[test]
fn strict_mode_stops_at_malformed_row() {
    let opts = IngestOptions {
        strict: true,
        ..Default::default()
    };
    let results: Vec<_> = ingest_stream(FIVE.as_bytes(), opts).collect();
    assert_eq!(results.len(), 2);
    match &results[1] {
        Err(IngestError::Strict { error, .. }) => {
            assert_eq!(error.line, 3);
            assert_eq!(error.column, 10);
            assert!(matches!(error.kind, ParseErrorKind::MalformedNumber(_)));
        }
        other => panic!("expected strict error, got {other:?}"),
    }
}

fn synthetic_file(records: u64) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    let cfg = SyntheticConfig {
        records,
        users: 200,
        places: 2_000,
        ..Default::default()
    };
    write_tsv(cfg, f.as_file_mut()).unwrap();
    f
}

fn sharded(path: &std::path::Path, shards: usize, opts: IngestOptions) -> (Vec<PhotoRecord>, IngestStats) {
    let (parts, s) = ingest_file_sharded(path, opts, shards, None, Vec::new, |v: &mut Vec<_>, r| v.push(r)).unwrap();
    (parts.concat(), s)
}

#[test]
fn sharding_matches_single_pass() {
    let f = synthetic_file(20_000);
    let text = std::fs::read_to_string(f.path()).unwrap();
    let single = read_all(&text, IngestOptions::default());
    for shards in [1, 2, 3, 7, 16] {
        let ranges = shard_ranges(f.path(), shards).unwrap();
        assert!(ranges.len() <= shards);
        assert_eq!(ranges.first().unwrap().start, 0);
        assert_eq!(ranges.last().unwrap().end, text.len() as u64);
        assert_eq!(sharded(f.path(), shards, IngestOptions::default()), single, "{shards} shards");
    }
}

#[test]
fn gzip_matches_plain() {
    let f = synthetic_file(5_000);
    let plain = std::fs::read(f.path()).unwrap();
    let mut gz = tempfile::NamedTempFile::new().unwrap();
    let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
    enc.write_all(&plain).unwrap();
    gz.write_all(&enc.finish().unwrap()).unwrap();
    assert_eq!(
        sharded(gz.path(), 4, IngestOptions::default()),
        sharded(f.path(), 4, IngestOptions::default())
    );
}

#[test]
fn strict_line_numbers_are_global_across_shards() {
    let f = synthetic_file(3_000);
    let mut text = std::fs::read_to_string(f.path()).unwrap();
    text.push_str("bad\tuser\t\t\t\t\t\t\t\t\t7.x\t45.0\n");
    std::fs::write(f.path(), &text).unwrap();
    let opts = IngestOptions {
        strict: true,
        ..Default::default()
    };
    let err = ingest_file_sharded(f.path(), opts, 4, None, || (), |_, _| ()).unwrap_err();
    match err {
        IngestError::Strict { error, offset } => {
            assert_eq!(error.line, 3_001);
            assert_eq!(offset as usize, text.len() - "bad\tuser\t\t\t\t\t\t\t\t\t7.x\t45.0\n".len());
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_file_is_an_open_error() {
    let err = ingest_file_sharded(std::path::Path::new("/nonexistent/x.tsv"), IngestOptions::default(), 2, None, || (), |_, _| ())
        .unwrap_err();
    assert!(matches!(err, IngestError::Open { .. }));
}

#[test]
fn sharded_build_equals_streaming_build() {
    let f = synthetic_file(20_000);
    let text = std::fs::read_to_string(f.path()).unwrap();
    let (recs, _) = read_all(&text, IngestOptions::default());
    let snap = |visits: &[covisnet::UserVisitSet]| {
        let (g, _) = build_from_visits(visits, &BuildConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&g, &mut buf).unwrap();
        buf
    };
    let reference = snap(&collect_visits(recs));
    for shards in [2, 5] {
        let (parts, _) =
            ingest_file_sharded(f.path(), IngestOptions::default(), shards, None, VisitCollector::new, |c, r| {
                c.push(&r)
            })
            .unwrap();
        let mut all = VisitCollector::new();
        // Merge in reverse to show order does not matter.
        for p in parts.into_iter().rev() {
            all.merge(p);
        }
        assert_eq!(snap(&all.finish()), reference);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stats_ignore_line_order(seed in any::<u64>(), extra in prop::collection::vec(0usize..5, 0..20)) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut lines: Vec<&str> = THREE_USERS.lines().chain(FIVE.lines()).collect();
        for i in extra {
            lines.push(lines[i]);
        }
        let (a, sa) = read_all(&lines.join("\n"), IngestOptions::default());
        lines.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (b, sb) = read_all(&lines.join("\n"), IngestOptions::default());
        prop_assert_eq!(sa, sb);
        let key = |v: &[PhotoRecord]| {
            let mut k: Vec<_> = v.iter().map(|r| (r.photo_id.clone(), r.user_id.clone())).collect();
            k.sort();
            k
        };
        prop_assert_eq!(key(&a), key(&b));
        prop_assert!(sa.in_box <= sa.geotagged && sa.geotagged <= sa.total_lines);
        prop_assert!(sa.parse_errors <= sa.total_lines);
    }
}
