//! Invariant checks on built-in fixtures and seeded random instances.

use std::collections::{BTreeMap, BTreeSet};

use covisnet::build::{build_from_visits, collect_visits};
use covisnet::export::{read_edges_tsv, write_edges_tsv};
use covisnet::ingest::{ingest_stream, IngestOptions};
use covisnet::metrics::{
    assortativity, assortativity_from_joint, degree_histogram, endpoint_degree_correlation, knn_curve,
    remaining_degree_distribution, weight_histogram, AssortativityResult,
};
use covisnet::powerlaw::fit_log_binned;
use covisnet::snapshot::{read_snapshot, write_snapshot};
use covisnet::{
    build_graph, quantize, BuildConfig, CoVisGraph, Histogram, IngestStats, KnnAveraging, LocationId, PhotoRecord,
    WeightedEdge,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const THREE_USERS: &str = include_str!("../../core/tests/fixtures/three_users.tsv");
pub const FIVE_LINES: &str = include_str!("../../core/tests/fixtures/ingest_five_lines.tsv");

const EPS: f64 = 1e-12;

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, what: &str) -> Check {
    ensure((a - b).abs() <= EPS, || format!("{what}: {a} != {b}"))
}

fn records(text: &str) -> Result<(Vec<PhotoRecord>, IngestStats), String> {
    let mut reader = ingest_stream(text.as_bytes(), IngestOptions::default());
    let recs = reader.by_ref().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    Ok((recs, reader.stats()))
}

fn build(recs: Vec<PhotoRecord>, min_users: u32) -> Result<CoVisGraph, String> {
    let cfg = BuildConfig {
        min_users_per_edge: min_users,
        ..Default::default()
    };
    build_graph(recs, &cfg).map(|(g, _)| g).map_err(|e| e.to_string())
}

fn id(a: i32) -> LocationId {
    LocationId::new(a, 0).expect("small index is on the grid")
}

fn graph(edges: &[(i32, i32)]) -> CoVisGraph {
    let mut list: Vec<WeightedEdge> = edges
        .iter()
        .map(|&(a, b)| WeightedEdge {
            u: id(a.min(b)),
            v: id(a.max(b)),
            weight: 2,
        })
        .collect();
    list.sort();
    CoVisGraph::from_edges(list).expect("well-formed edge list")
}

fn random_graph(rng: &mut ChaCha8Rng) -> CoVisGraph {
    let n = rng.random_range(2..40);
    let p = rng.random_range(0.05..0.6);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p) {
                edges.push((a, b));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, 1));
    }
    graph(&edges)
}

/// Up to 30 users visiting up to 20 cells, several photos per user.
fn random_records(rng: &mut ChaCha8Rng) -> Vec<PhotoRecord> {
    let users = rng.random_range(1..=30);
    let cells = rng.random_range(1..=20);
    let mut out = Vec::new();
    for u in 0..users {
        for p in 0..rng.random_range(1..=8) {
            let c = rng.random_range(0..cells);
            out.push(PhotoRecord {
                photo_id: format!("{u}-{p}"),
                user_id: format!("user{u}"),
                lat: 45.0 + (f64::from(c) + 0.5) / 1000.0,
                lon: 7.0005,
            });
        }
    }
    out
}

/// Pairwise count over users, independent of the aggregation pipeline.
fn oracle(recs: &[PhotoRecord], min_users: u32) -> BTreeMap<(LocationId, LocationId), u32> {
    let mut by_user: BTreeMap<&str, BTreeSet<LocationId>> = BTreeMap::new();
    for r in recs {
        by_user.entry(&r.user_id).or_default().insert(quantize(r.lat, r.lon));
    }
    let all: BTreeSet<LocationId> = by_user.values().flatten().copied().collect();
    let all: Vec<LocationId> = all.into_iter().collect();
    let mut out = BTreeMap::new();
    for (i, &a) in all.iter().enumerate() {
        for &b in &all[i + 1..] {
            let w = by_user.values().filter(|s| s.contains(&a) && s.contains(&b)).count() as u32;
            if w >= min_users {
                out.insert((a, b), w);
            }
        }
    }
    out
}

fn edge_map(g: &CoVisGraph) -> BTreeMap<(LocationId, LocationId), u32> {
    g.edges().map(|e| ((e.u, e.v), e.weight)).collect()
}

fn snapshot_bytes(g: &CoVisGraph) -> Vec<u8> {
    let mut buf = Vec::new();
    write_snapshot(g, &mut buf).expect("writing to memory");
    buf
}

fn handshake_and_normalization(g: &CoVisGraph) -> Check {
    let deg_sum: u64 = g.degrees().iter().sum();
    ensure(deg_sum == 2 * g.m() as u64, || format!("degree sum {deg_sum} != 2M = {}", 2 * g.m()))?;
    let dh = degree_histogram(g).map_err(|e| e.to_string())?;
    let pk: f64 = dh.probabilities::<f64>().iter().map(|p| p.2).sum();
    ensure((pk - 1.0).abs() <= 1e-9, || format!("sum p_k = {pk}"))?;
    let (wh, _) = weight_histogram::<f64>(g).map_err(|e| e.to_string())?;
    let pw: f64 = wh.probabilities::<f64>().iter().map(|p| p.2).sum();
    ensure((pw - 1.0).abs() <= 1e-9, || format!("sum p_w = {pw}"))
}

fn check_quantize() -> Check {
    for (lat, lon, want) in [
        (45.1234, 7.6548, (45123, 7654)),
        (-0.0004, -0.0004, (-1, -1)),
        (52.0, 13.0, (52000, 13000)),
    ] {
        let q = quantize(lat, lon);
        ensure((q.lat_milli, q.lon_milli) == want, || format!("quantize({lat}, {lon}) = {q}"))?;
        ensure(LocationId::unpack(q.pack()) == q, || format!("pack round trip failed for {q}"))?;
    }
    Ok(())
}

fn check_ingest_fixture() -> Check {
    let (recs, stats) = records(FIVE_LINES)?;
    let want = IngestStats {
        total_lines: 5,
        geotagged: 3,
        in_box: 2,
        parse_errors: 1,
    };
    ensure(recs.len() == 2 && stats == want, || format!("{} records, {stats:?}", recs.len()))
}

fn check_fixture_build() -> Check {
    let (recs, _) = records(THREE_USERS)?;
    let g = build(recs.clone(), 2)?;
    ensure((g.n(), g.m()) == (2, 1), || format!("N = {}, M = {}", g.n(), g.m()))?;
    ensure(edge_map(&g) == oracle(&recs, 2), || "fixture differs from oracle".into())?;
    let g1 = build(recs.clone(), 1)?;
    ensure((g1.n(), g1.m()) == (3, 2), || format!("min 1: N = {}, M = {}", g1.n(), g1.m()))?;
    ensure(g.components().component_count == 1, || "fixture is not connected".into())
}

fn check_oracle(rng: &mut ChaCha8Rng, instances: usize) -> Check {
    for i in 0..instances {
        let recs = random_records(rng);
        let want = oracle(&recs, 2);
        let g = match build(recs, 2) {
            Ok(g) => g,
            Err(e) => return Err(format!("instance {i}: {e}")),
        };
        ensure(edge_map(&g) == want, || format!("instance {i}: edges differ from oracle"))?;
        let ends: BTreeSet<LocationId> = want.keys().flat_map(|&(a, b)| [a, b]).collect();
        ensure(g.n() == ends.len(), || format!("instance {i}: N = {} != {}", g.n(), ends.len()))?;
        ensure(g.edges().all(|e| e.weight >= 2), || format!("instance {i}: weight below 2"))?;
    }
    Ok(())
}

fn check_determinism(rng: &mut ChaCha8Rng) -> Check {
    let mut lines: Vec<&str> = THREE_USERS.lines().collect();
    let (recs, _) = records(THREE_USERS)?;
    let reference = snapshot_bytes(&build(recs, 2)?);
    for _ in 0..20 {
        lines.shuffle(rng);
        let (recs, _) = records(&lines.join("\n"))?;
        ensure(snapshot_bytes(&build(recs, 2)?) == reference, || "shuffled input changed the snapshot".into())?;
    }
    Ok(())
}

fn check_spill(rng: &mut ChaCha8Rng) -> Check {
    let mut recs = Vec::new();
    for _ in 0..10 {
        recs.extend(random_records(rng));
    }
    let visits = collect_visits(recs);
    let memory = build_from_visits(&visits, &BuildConfig::default()).map_err(|e| e.to_string())?;
    let tiny = BuildConfig {
        memory_budget_bytes: 256,
        ..Default::default()
    };
    let spilled = build_from_visits(&visits, &tiny).map_err(|e| e.to_string())?;
    ensure(spilled.1.spill_runs > 0, || "tiny budget did not spill".into())?;
    ensure(snapshot_bytes(&memory.0) == snapshot_bytes(&spilled.0), || {
        "spilled build differs from in-memory build".into()
    })
}

fn check_closed_forms() -> Check {
    let star = graph(&[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
    let r = assortativity::<f64>(&star).map_err(|e| e.to_string())?;
    close(r.value().unwrap_or(f64::NAN), -1.0, "star r")?;
    let knn = knn_curve::<f64>(&star, KnnAveraging::PerVertex).map_err(|e| e.to_string())?;
    ensure(knn.points.len() == 2, || format!("star knn {:?}", knn.points))?;
    close(knn.points[&1], 5.0, "star knn(1)")?;
    close(knn.points[&5], 1.0, "star knn(5)")?;

    for (name, g) in [
        ("triangle", graph(&[(0, 1), (1, 2), (0, 2)])),
        ("C5", graph(&[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)])),
    ] {
        let r = assortativity::<f64>(&g).map_err(|e| e.to_string())?;
        ensure(r == AssortativityResult::Undefined, || format!("{name}: r = {r:?}"))?;
    }

    let p4 = graph(&[(0, 1), (1, 2), (2, 3)]);
    for avg in [KnnAveraging::PerVertex, KnnAveraging::Pooled] {
        let knn = knn_curve::<f64>(&p4, avg).map_err(|e| e.to_string())?;
        close(knn.points[&1], 2.0, "P4 knn(1)")?;
        close(knn.points[&2], 1.5, "P4 knn(2)")?;
    }
    Ok(())
}

fn check_pearson_routes(rng: &mut ChaCha8Rng) -> Check {
    for i in 0..100 {
        let g = random_graph(rng);
        let full = assortativity::<f64>(&g).map_err(|e| e.to_string())?;
        let remaining = endpoint_degree_correlation::<f64>(&g, 1).map_err(|e| e.to_string())?;
        let joint = assortativity_from_joint::<f64>(&g).map_err(|e| e.to_string())?;
        match (full.value(), remaining.value(), joint.value()) {
            (Some(a), Some(b), Some(c)) => {
                close(a, b, &format!("graph {i}: full vs remaining"))?;
                ensure((a - c).abs() <= 1e-9, || format!("graph {i}: full {a} vs joint {c}"))?;
            }
            (None, None, None) => {}
            other => return Err(format!("graph {i}: routes disagree on definedness: {other:?}")),
        }
        let q = remaining_degree_distribution::<f64>(&degree_histogram(&g).map_err(|e| e.to_string())?);
        let total: f64 = q.values().sum();
        close(total, 1.0, &format!("graph {i}: sum q_k"))?;
        handshake_and_normalization(&g).map_err(|e| format!("graph {i}: {e}"))?;
    }
    Ok(())
}

fn check_round_trips(rng: &mut ChaCha8Rng) -> Check {
    let (recs, _) = records(THREE_USERS)?;
    let mut graphs = vec![build(recs, 1)?];
    graphs.extend((0..10).map(|_| random_graph(rng)));
    for g in graphs {
        let back = read_snapshot(&snapshot_bytes(&g)[..]).map_err(|e| e.to_string())?;
        ensure(back == g, || "snapshot round trip changed the graph".into())?;
        let mut tsv = Vec::new();
        write_edges_tsv(&g, &mut tsv).map_err(|e| e.to_string())?;
        let rebuilt = CoVisGraph::from_edges(read_edges_tsv(&tsv[..]).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        ensure(rebuilt == g, || "edge table round trip changed the graph".into())?;
    }
    Ok(())
}

fn check_regression() -> Check {
    // Exact k^-2 counts over 1..=1000, scaled so every count is an integer.
    let h = Histogram::from_counts((1..=1000u64).map(|k| (k, 1_000_000_000 / (k * k))));
    let fit = fit_log_binned::<f64>(&h, None).map_err(|e| e.to_string())?;
    ensure((fit.exponent - 2.0).abs() <= 0.05, || format!("exponent {}", fit.exponent))
}

/// Runs every check, printing one line each. Returns the number of failures.
pub fn run(seed: u64, instances: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results: Vec<(&str, Check)> = vec![
        ("quantize", check_quantize()),
        ("ingest-fixture", check_ingest_fixture()),
        ("fixture-build", check_fixture_build()),
    ];
    results.push(("oracle-equivalence", check_oracle(&mut rng, instances)));
    results.push(("determinism", check_determinism(&mut rng)));
    results.push(("spill-equals-memory", check_spill(&mut rng)));
    results.push(("closed-form-metrics", check_closed_forms()));
    results.push(("pearson-routes", check_pearson_routes(&mut rng)));
    results.push(("round-trips", check_round_trips(&mut rng)));
    results.push(("log-binned-regression", check_regression()));

    let mut failed = 0;
    for (name, r) in results {
        match r {
            Ok(()) => println!("PASS {name}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    failed
}
