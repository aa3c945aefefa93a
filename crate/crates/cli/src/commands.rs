use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use covisnet::build::{build_from_visits, VisitCollector};
use covisnet::export::{export_all, ExportConfig, ExportFormat};
use covisnet::ingest::{ingest_file_sharded, LineProgress};
use covisnet::report::{analyze, Analysis};
use covisnet::snapshot::{load_snapshot, save_snapshot};
use covisnet::synth::{write_tsv, SyntheticConfig};
use covisnet::{BuildStats, CoVisGraph, IngestStats};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

const PROGRESS_EVERY: u64 = 1_000_000;
const PROGRESS_TICK: u64 = 100_000;

/// Contents of the build stats file.
#[derive(Debug, Serialize)]
pub struct BuildReport {
    #[serde(flatten)]
    pub build: BuildStats,
    pub ingest: IngestStats,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    ensure_parent(path)?;
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn progress_hook(quiet: bool) -> Option<(u64, LineProgress)> {
    if quiet {
        return None;
    }
    let lines = Arc::new(AtomicU64::new(0));
    let hook: LineProgress = Arc::new(move |n| {
        let before = lines.fetch_add(n, Ordering::Relaxed);
        let after = before + n;
        if after / PROGRESS_EVERY > before / PROGRESS_EVERY {
            eprintln!("{} lines read", after / PROGRESS_EVERY * PROGRESS_EVERY);
        }
    });
    Some((PROGRESS_TICK, hook))
}

/// Ingests every input and builds the graph in memory.
pub fn build_graph(cfg: &RunConfig, quiet: bool) -> Result<(CoVisGraph, BuildReport), CliError> {
    if cfg.inputs.is_empty() {
        return Err(CliError::Config("no input files given".into()));
    }
    let opts = cfg.ingest_options();
    let threads = cfg.thread_count();
    let mut collector = VisitCollector::new();
    let mut ingest = IngestStats::default();
    for path in &cfg.inputs {
        let (parts, stats) = ingest_file_sharded(
            path,
            opts,
            threads,
            progress_hook(quiet),
            VisitCollector::new,
            |c, rec| c.push(&rec),
        )
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        for part in parts {
            collector.merge(part);
        }
        ingest += stats;
    }
    let visits = collector.finish();
    let (graph, build) = build_from_visits(&visits, &cfg.build)?;
    if graph.is_empty() {
        return Err(CliError::Input(format!(
            "empty graph: {} lines read, {} in the bounding box, {} users, no location pair shared by {} or more users",
            ingest.total_lines, ingest.in_box, build.users, cfg.build.min_users_per_edge
        )));
    }
    Ok((graph, BuildReport { build, ingest }))
}

pub fn cmd_build(cfg: &RunConfig, snapshot: &Path, stats: &Path, quiet: bool) -> Result<BuildReport, CliError> {
    let (graph, report) = build_graph(cfg, quiet)?;
    ensure_parent(snapshot)?;
    save_snapshot(&graph, snapshot).map_err(io_err(snapshot))?;
    write_json(&report, stats)?;
    if !quiet {
        eprintln!(
            "{} lines, {} in box, {} parse errors; N = {}, M = {}, {} spill run(s)",
            report.ingest.total_lines,
            report.ingest.in_box,
            report.ingest.parse_errors,
            report.build.n,
            report.build.m,
            report.build.spill_runs
        );
    }
    Ok(report)
}

fn load(snapshot: &Path) -> Result<CoVisGraph, CliError> {
    load_snapshot(snapshot).map_err(|e| CliError::Input(format!("{}: {e}", snapshot.display())))
}

/// Drops formats whose data this graph does not have.
fn available(formats: &BTreeSet<ExportFormat>, a: &Analysis<f64>) -> BTreeSet<ExportFormat> {
    formats
        .iter()
        .copied()
        .filter(|f| match f {
            ExportFormat::DistTsv => a.degree_hist.is_some() && a.weight_hist.is_some(),
            ExportFormat::KnnTsv => a.knn.is_some(),
            _ => true,
        })
        .collect()
}

fn write_outputs(g: &CoVisGraph, cfg: &RunConfig, formats: BTreeSet<ExportFormat>) -> Result<Vec<PathBuf>, CliError> {
    let analysis = analyze::<f64>(g, &cfg.analysis);
    let export = ExportConfig {
        formats: available(&formats, &analysis),
        ..cfg.export.clone()
    };
    Ok(export_all(g, &analysis, &export)?)
}

/// Summary report plus distribution and k_nn tables.
pub fn cmd_analyze(cfg: &RunConfig, snapshot: &Path) -> Result<Vec<PathBuf>, CliError> {
    let g = load(snapshot)?;
    let formats = [ExportFormat::SummaryJson, ExportFormat::DistTsv, ExportFormat::KnnTsv].into();
    write_outputs(&g, cfg, formats)
}

pub fn cmd_export(cfg: &RunConfig, snapshot: &Path) -> Result<Vec<PathBuf>, CliError> {
    let g = load(snapshot)?;
    write_outputs(&g, cfg, cfg.export.formats.clone())
}

pub fn cmd_generate(cfg: &SyntheticConfig, out: &Path) -> Result<u64, CliError> {
    ensure_parent(out)?;
    let f = File::create(out).map_err(io_err(out))?;
    write_tsv(cfg.clone(), f).map_err(io_err(out))
}
