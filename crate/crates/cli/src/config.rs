//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use covisnet::export::ExportConfig;
use covisnet::ingest::IngestOptions;
use covisnet::report::AnalysisOptions;
use covisnet::{BoundingBox, BuildConfig, ColumnLayout};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; 0 means available parallelism.
    pub threads: usize,
    /// Seed for the randomized checks and the synthetic generator.
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub strict: bool,
    pub bbox: BoundingBox,
    pub layout: ColumnLayout,
    pub build: BuildConfig,
    pub analysis: AnalysisOptions,
    pub export: ExportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            threads: 0,
            seed: 42,
            inputs: Vec::new(),
            strict: false,
            bbox: BoundingBox::default(),
            layout: ColumnLayout::default(),
            build: BuildConfig::default(),
            analysis: AnalysisOptions::default(),
            export: ExportConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.bbox.validate().map_err(|e| cfg(&e))?;
        self.layout.validate().map_err(|e| cfg(&e))?;
        self.build.validate().map_err(|e| cfg(&e))?;
        self.export.validate().map_err(|e| cfg(&e))?;
        Ok(())
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            layout: self.layout,
            bbox: self.bbox,
            strict: self.strict,
        }
    }

    pub fn thread_count(&self) -> usize {
        if self.threads == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.threads
        }
    }
}

/// Parses `lat_min,lat_max,lon_min,lon_max`.
pub fn parse_bbox(s: &str) -> Result<BoundingBox, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [a, b, c, d] = parts[..] else {
        return Err(format!("expected lat_min,lat_max,lon_min,lon_max, got {s:?}"));
    };
    BoundingBox::new(a, b, c, d).map_err(|e| e.to_string())
}

/// Parses a byte count with an optional K/M/G suffix (powers of 1024).
pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let (digits, shift) = match t.chars().last().map(|c| c.to_ascii_uppercase()) {
        Some('K') => (&t[..t.len() - 1], 10),
        Some('M') => (&t[..t.len() - 1], 20),
        Some('G') => (&t[..t.len() - 1], 30),
        _ => (t, 0),
    };
    let n: u64 = digits.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    n.checked_mul(1 << shift).ok_or_else(|| format!("{s:?} is too large"))
}

/// Parses a single-character delimiter; `\t` and `tab` are accepted for tab.
pub fn parse_delimiter(s: &str) -> Result<char, String> {
    match s {
        "\\t" | "tab" => return Ok('\t'),
        _ => {}
    }
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(format!("delimiter must be one character, got {s:?}")),
    }
}
