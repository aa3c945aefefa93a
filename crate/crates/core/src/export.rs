//! File artifacts: edge and node tables, plot data, map segments, summary, snapshot.
//!
//! Every TSV is UTF-8, tab-delimited, with one header line starting with `#`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::build::WeightedEdge;
use crate::graph::{CoVisGraph, GraphError};
use crate::metrics::{Histogram, KnnCurve};
use crate::quantize::{cell_center, LocationId, EARTH_RADIUS_M};
use crate::report::Analysis;
use crate::snapshot;
use crate::Scalar;

pub const EDGES_HEADER: &str = "#u_lat_milli\tu_lon_milli\tv_lat_milli\tv_lon_milli\tweight";
pub const NODES_HEADER: &str = "#index\tlat_milli\tlon_milli\tlat\tlon\tdegree\tstrength";
pub const DIST_HEADER: &str = "#value\tcount\tprobability";
pub const KNN_HEADER: &str = "#k\tknn_avg";
pub const MAP_HEADER: &str = "#u_lat\tu_lon\tv_lat\tv_lon\tweight";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("edge table line {line}: {message}")]
    BadEdgeLine { line: u64, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("map separation cutoff must be positive, got {0}")]
    InvalidCutoff(f64),
    #[error("{0} needs analysis results that this graph does not have")]
    MissingMetric(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    EdgeTsv,
    NodesTsv,
    DistTsv,
    KnnTsv,
    MapTsv,
    SummaryJson,
    GraphBinary,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 7] = [
        ExportFormat::EdgeTsv,
        ExportFormat::NodesTsv,
        ExportFormat::DistTsv,
        ExportFormat::KnnTsv,
        ExportFormat::MapTsv,
        ExportFormat::SummaryJson,
        ExportFormat::GraphBinary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExportFormat::EdgeTsv => "edge_tsv",
            ExportFormat::NodesTsv => "nodes_tsv",
            ExportFormat::DistTsv => "dist_tsv",
            ExportFormat::KnnTsv => "knn_tsv",
            ExportFormat::MapTsv => "map_tsv",
            ExportFormat::SummaryJson => "summary_json",
            ExportFormat::GraphBinary => "graph_binary",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    /// Output file names for this format.
    pub fn file_names(self) -> &'static [&'static str] {
        match self {
            ExportFormat::EdgeTsv => &["edges.tsv"],
            ExportFormat::NodesTsv => &["nodes.tsv"],
            ExportFormat::DistTsv => &["degree_dist.tsv", "weight_dist.tsv"],
            ExportFormat::KnnTsv => &["knn.tsv"],
            ExportFormat::MapTsv => &["map_edges.tsv"],
            ExportFormat::SummaryJson => &["summary.json"],
            ExportFormat::GraphBinary => &["graph.bin"],
        }
    }
}

/// How the separation between two map endpoints is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeparationMetric {
    /// `max(|Δlat|, |Δlon|)` in degrees.
    #[default]
    Chebyshev,
    /// Central angle between the two points, in degrees.
    GreatCircle,
}

impl SeparationMetric {
    pub fn separation(self, a: (f64, f64), b: (f64, f64)) -> f64 {
        match self {
            SeparationMetric::Chebyshev => (a.0 - b.0).abs().max((a.1 - b.1).abs()),
            SeparationMetric::GreatCircle => {
                let (la, lb) = (a.0.to_radians(), b.0.to_radians());
                let dlat = lb - la;
                let dlon = (b.1 - a.1).to_radians();
                let h = (dlat / 2.0).sin().powi(2) + la.cos() * lb.cos() * (dlon / 2.0).sin().powi(2);
                (2.0 * h.sqrt().min(1.0).asin()).to_degrees()
            }
        }
    }
}

/// Great-circle distance in meters between two `(lat, lon)` points.
pub fn great_circle_meters(a: (f64, f64), b: (f64, f64)) -> f64 {
    SeparationMetric::GreatCircle.separation(a, b).to_radians() * EARTH_RADIUS_M
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub output_dir: PathBuf,
    pub map_max_separation_deg: f64,
    pub map_metric: SeparationMetric,
    pub formats: BTreeSet<ExportFormat>,
}

impl Default for ExportConfig {
    fn default() -> Self {
        ExportConfig {
            output_dir: PathBuf::from("out"),
            map_max_separation_deg: 10.0,
            map_metric: SeparationMetric::Chebyshev,
            formats: ExportFormat::ALL.into_iter().collect(),
        }
    }
}

impl ExportConfig {
    pub fn validate(&self) -> Result<(), ExportError> {
        if self.map_max_separation_deg.is_nan() || self.map_max_separation_deg <= 0.0 {
            return Err(ExportError::InvalidCutoff(self.map_max_separation_deg));
        }
        Ok(())
    }
}

/// One line per undirected edge in canonical order. Returns the number of data lines.
pub fn write_edges_tsv<W: Write>(g: &CoVisGraph, w: W) -> io::Result<usize> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{EDGES_HEADER}")?;
    let mut n = 0;
    for e in g.edges() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            e.u.lat_milli, e.u.lon_milli, e.v.lat_milli, e.v.lon_milli, e.weight
        )?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

/// Parses an edge table written by [`write_edges_tsv`].
pub fn read_edges_tsv<R: BufRead>(r: R) -> Result<Vec<WeightedEdge>, ExportError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|source| ExportError::Io {
            path: "edge table".into(),
            source,
        })?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| ExportError::BadEdgeLine { line: line_no, message };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let int = |s: &str| s.parse::<i32>().map_err(|e| bad(format!("{s:?}: {e}")));
        let cell = |a: i32, b: i32| LocationId::new(a, b).ok_or_else(|| bad(format!("cell ({a}, {b}) is off the grid")));
        let u = cell(int(fields[0])?, int(fields[1])?)?;
        let v = cell(int(fields[2])?, int(fields[3])?)?;
        let weight = fields[4].parse::<u32>().map_err(|e| bad(format!("{:?}: {e}", fields[4])))?;
        out.push(WeightedEdge { u, v, weight });
    }
    Ok(out)
}

pub fn write_nodes_tsv<W: Write>(g: &CoVisGraph, w: W) -> io::Result<usize> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{NODES_HEADER}")?;
    for (i, id) in g.vertices().iter().enumerate() {
        let (lat, lon) = cell_center(*id);
        writeln!(
            w,
            "{i}\t{}\t{}\t{lat:.4}\t{lon:.4}\t{}\t{}",
            id.lat_milli,
            id.lon_milli,
            g.degree(i).expect("index in range"),
            g.strength(i).expect("index in range"),
        )?;
    }
    w.flush()?;
    Ok(g.n())
}

/// `(value, count, probability)` rows in ascending value order.
pub fn write_distribution_tsv<W: Write>(h: &Histogram, w: W) -> io::Result<usize> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{DIST_HEADER}")?;
    let rows = h.probabilities::<f64>();
    for (v, c, p) in &rows {
        writeln!(w, "{v}\t{c}\t{p}")?;
    }
    w.flush()?;
    Ok(rows.len())
}

pub fn write_knn_tsv<T: Scalar, W: Write>(c: &KnnCurve<T>, w: W) -> io::Result<usize> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{KNN_HEADER}")?;
    for (k, v) in &c.points {
        writeln!(w, "{k}\t{v}")?;
    }
    w.flush()?;
    Ok(c.points.len())
}

/// Edges whose endpoint cell centers are closer than the cutoff, as drawable
/// segments. Returns the number of segments written.
pub fn write_map_edges_tsv<W: Write>(g: &CoVisGraph, max_separation_deg: f64, metric: SeparationMetric, w: W) -> io::Result<usize> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{MAP_HEADER}")?;
    let mut n = 0;
    for e in g.edges() {
        let a = cell_center(e.u);
        let b = cell_center(e.v);
        if metric.separation(a, b) < max_separation_deg {
            writeln!(w, "{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}", a.0, a.1, b.0, b.1, e.weight)?;
            n += 1;
        }
    }
    w.flush()?;
    Ok(n)
}

pub fn write_summary_json<T: Scalar + Serialize, W: Write>(analysis: &Analysis<T>, w: W) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    serde_json::to_writer_pretty(&mut w, &analysis.summary())?;
    writeln!(w)?;
    w.flush()
}

fn create(path: &Path) -> Result<File, ExportError> {
    File::create(path).map_err(|source| ExportError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes every requested format into `cfg.output_dir`. Returns the paths written, in format order.
pub fn export_all<T: Scalar + Serialize>(
    g: &CoVisGraph,
    analysis: &Analysis<T>,
    cfg: &ExportConfig,
) -> Result<Vec<PathBuf>, ExportError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_at(&cfg.output_dir))?;
    let mut written = Vec::new();
    for &format in &cfg.formats {
        for (name, hist) in format.file_names().iter().zip([&analysis.degree_hist, &analysis.weight_hist]) {
            let path = cfg.output_dir.join(name);
            match format {
                ExportFormat::EdgeTsv => {
                    write_edges_tsv(g, create(&path)?).map_err(io_at(&path))?;
                }
                ExportFormat::NodesTsv => {
                    write_nodes_tsv(g, create(&path)?).map_err(io_at(&path))?;
                }
                ExportFormat::DistTsv => {
                    let h = hist.as_ref().ok_or(ExportError::MissingMetric("dist_tsv"))?;
                    write_distribution_tsv(h, create(&path)?).map_err(io_at(&path))?;
                }
                ExportFormat::KnnTsv => {
                    let c = analysis.knn.as_ref().ok_or(ExportError::MissingMetric("knn_tsv"))?;
                    write_knn_tsv(c, create(&path)?).map_err(io_at(&path))?;
                }
                ExportFormat::MapTsv => {
                    write_map_edges_tsv(g, cfg.map_max_separation_deg, cfg.map_metric, create(&path)?)
                        .map_err(io_at(&path))?;
                }
                ExportFormat::SummaryJson => {
                    write_summary_json(analysis, create(&path)?).map_err(io_at(&path))?;
                }
                ExportFormat::GraphBinary => {
                    snapshot::write_snapshot(g, create(&path)?).map_err(io_at(&path))?;
                }
            }
            written.push(path);
        }
    }
    Ok(written)
}
