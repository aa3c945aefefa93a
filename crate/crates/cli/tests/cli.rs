use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use covisnet::snapshot::{load_snapshot, save_snapshot};
use covisnet::{CoVisGraph, LocationId, WeightedEdge};
use serde_json::Value;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/three_users.tsv");

fn covisnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covisnet")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = covisnet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn build_fixture(dir: &Path, extra: &[&str]) -> PathBuf {
    let snap = dir.join("graph.bin");
    let mut args = vec!["build", FIXTURE, "-o", s(&snap), "-q"];
    args.extend_from_slice(extra);
    ok(&args);
    snap
}

fn snapshot_of(dir: &Path, pairs: &[(i32, i32)]) -> PathBuf {
    let id = |a| LocationId::new(a, 0).unwrap();
    let mut edges: Vec<_> = pairs
        .iter()
        .map(|&(a, b)| WeightedEdge {
            u: id(a),
            v: id(b),
            weight: 3,
        })
        .collect();
    edges.sort();
    let path = dir.join("input.bin");
    save_snapshot(&CoVisGraph::from_edges(edges).unwrap(), &path).unwrap();
    path
}

#[test]
fn build_fixture_graph() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), &[]);
    let stats = json(&dir.path().join("graph.stats.json"));
    assert_eq!((stats["N"].as_u64(), stats["M"].as_u64()), (Some(2), Some(1)));
    assert_eq!(stats["users"], 3);
    assert_eq!(stats["ingest"]["total_lines"], 12);
    assert_eq!(stats["ingest"]["in_box"], 9);

    let g = load_snapshot(&dir.path().join("graph.bin")).unwrap();
    assert_eq!(g.edges().map(|e| e.weight).collect::<Vec<_>>(), vec![2]);
}

#[test]
fn relaxed_threshold() {
    let dir = tempfile::tempdir().unwrap();
    build_fixture(dir.path(), &["--min-users", "1"]);
    let stats = json(&dir.path().join("graph.stats.json"));
    assert_eq!((stats["N"].as_u64(), stats["M"].as_u64()), (Some(3), Some(2)));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("inputs = [{FIXTURE:?}]\n[build]\nmin_users_per_edge = 1\n")).unwrap();
    let snap = dir.path().join("a.bin");
    ok(&["--config", s(&cfg), "build", "-o", s(&snap), "-q"]);
    assert_eq!(load_snapshot(&snap).unwrap().m(), 2);
    ok(&["--config", s(&cfg), "build", "-o", s(&snap), "-q", "--min-users", "2"]);
    assert_eq!(load_snapshot(&snap).unwrap().m(), 1);
}

#[test]
fn empty_graph_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = covisnet(&["build", FIXTURE, "-o", s(&dir.path().join("g.bin")), "--bbox", "-10,-5,-10,-5"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty graph"));
    assert!(!dir.path().join("g.bin").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = covisnet(&["build", "/nonexistent/input.tsv", "-o", s(&dir.path().join("g.bin"))]);
    assert_eq!(missing.status.code(), Some(3));

    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "[build]\nmin_users_per_edge = 0\n").unwrap();
    let out = covisnet(&["--config", s(&bad_cfg), "build", FIXTURE]);
    assert_eq!(out.status.code(), Some(2));

    let out = covisnet(&["build", FIXTURE, "--bbox", "5,1,0,1"]);
    assert_eq!(out.status.code(), Some(2));

    let corrupt = dir.path().join("corrupt.bin");
    std::fs::write(&corrupt, b"NOTASNAPSHOT0000000000000000").unwrap();
    let out = covisnet(&["analyze", s(&corrupt), "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));

    let mut future = std::fs::read(build_fixture(dir.path(), &[])).unwrap();
    future[8] = 9;
    std::fs::write(&corrupt, future).unwrap();
    let out = covisnet(&["analyze", s(&corrupt), "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn analyze_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let snap = build_fixture(dir.path(), &[]);
    let out_dir = dir.path().join("out");
    ok(&["analyze", s(&snap), "-o", s(&out_dir)]);
    let summary = json(&out_dir.join("summary.json"));
    assert_eq!(summary["N"], 2);
    assert_eq!(summary["M"], 1);
    assert_eq!(summary["components"]["count"], 1);
    assert_eq!(summary["components"]["giant_fraction"], 1.0);
    for f in ["degree_dist.tsv", "weight_dist.tsv", "knn.tsv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    assert!(!out_dir.join("edges.tsv").exists());
}

#[test]
fn triangle_and_star_assortativity() {
    let dir = tempfile::tempdir().unwrap();
    let tri = snapshot_of(dir.path(), &[(0, 1), (0, 2), (1, 2)]);
    ok(&["analyze", s(&tri), "-o", s(&dir.path().join("tri"))]);
    assert_eq!(json(&dir.path().join("tri/summary.json"))["r"], "undefined");

    let star = snapshot_of(dir.path(), &[(0, 1), (0, 2), (0, 3), (0, 4)]);
    ok(&["analyze", s(&star), "-o", s(&dir.path().join("star"))]);
    let r = json(&dir.path().join("star/summary.json"))["r"].as_f64().unwrap();
    assert!((r + 1.0).abs() < 1e-12, "{r}");
    let knn = std::fs::read_to_string(dir.path().join("star/knn.tsv")).unwrap();
    assert_eq!(knn.lines().count(), 3);
}

#[test]
fn export_selected_formats() {
    let dir = tempfile::tempdir().unwrap();
    let snap = build_fixture(dir.path(), &["--min-users", "1"]);

    let edges_dir = dir.path().join("edges");
    ok(&["export", s(&snap), "-o", s(&edges_dir), "--formats", "edge_tsv"]);
    let files: Vec<_> = std::fs::read_dir(&edges_dir).unwrap().collect();
    assert_eq!(files.len(), 1);
    let text = std::fs::read_to_string(edges_dir.join("edges.tsv")).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with('#'));

    let map_dir = dir.path().join("map");
    ok(&["export", s(&snap), "-o", s(&map_dir), "--formats", "map_tsv", "--map-cutoff", "10"]);
    assert_eq!(std::fs::read_to_string(map_dir.join("map_edges.tsv")).unwrap().lines().count(), 3);
    ok(&["export", s(&snap), "-o", s(&map_dir), "--formats", "map_tsv", "--map-cutoff", "0.01"]);
    // Only the X–Y edge (0.008° apart in latitude) is shorter than 0.01°.
    assert_eq!(std::fs::read_to_string(map_dir.join("map_edges.tsv")).unwrap().lines().count(), 2);

    let bin_dir = dir.path().join("bin");
    ok(&["export", s(&snap), "-o", s(&bin_dir), "--formats", "graph_binary,summary_json"]);
    assert_eq!(load_snapshot(&bin_dir.join("graph.bin")).unwrap(), load_snapshot(&snap).unwrap());

    let out = covisnet(&["export", s(&snap), "--formats", "pdf"]);
    assert_eq!(out.status.code(), Some(2));
    let out = covisnet(&["export", s(&snap), "-o", s(&bin_dir), "--map-cutoff", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| {
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn pipeline_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("synthetic.tsv");
    ok(&["generate", "-o", s(&input), "--records", "30000", "--users", "300", "--places", "3000"]);
    let mut runs = Vec::new();
    for (i, threads) in ["1", "2", "3", "1"].iter().enumerate() {
        let run = dir.path().join(format!("run{i}"));
        let snap = run.join("graph.bin");
        ok(&["--threads", threads, "build", s(&input), "-o", s(&snap), "-q", "--memory-budget", "64K"]);
        ok(&["--threads", threads, "analyze", s(&snap), "-o", s(&run.join("analysis"))]);
        ok(&["--threads", threads, "export", s(&snap), "-o", s(&run.join("export"))]);
        runs.push(read_dir_bytes(&run));
        let mut all = read_dir_bytes(&run.join("analysis"));
        all.extend(read_dir_bytes(&run.join("export")));
        runs.push(all);
    }
    assert!(runs[0].contains_key("graph.stats.json"));
    assert_eq!(runs[1].len(), 8);
    for pair in runs.chunks(2).skip(1) {
        assert_eq!(pair[0], runs[0]);
        assert_eq!(pair[1], runs[1]);
    }
}

#[test]
fn selfcheck_passes() {
    let out = ok(&["selfcheck", "--instances", "50"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}
