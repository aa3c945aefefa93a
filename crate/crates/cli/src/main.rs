//! `covisnet`: build, analyze and export co-visitation networks.
//!
//! Exit codes: 0 success, 1 selfcheck failures, 2 configuration or usage
//! errors, 3 input errors, 4 internal and output errors.

mod commands;
mod config;
mod error;
mod selfcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covisnet::export::{ExportFormat, SeparationMetric};
use covisnet::synth::SyntheticConfig;
use covisnet::{BoundingBox, KnnAveraging};

use crate::config::{parse_bbox, parse_bytes, parse_delimiter, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "covisnet", version, about = "Co-visitation networks of photo locations")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest metadata files and write the graph snapshot plus build stats.
    Build(BuildArgs),
    /// Write the summary report and the distribution and k_nn tables.
    Analyze(AnalyzeArgs),
    /// Write the selected export formats.
    Export(ExportArgs),
    /// Run the invariant suite on built-in fixtures.
    Selfcheck(SelfcheckArgs),
    /// Write seeded synthetic metadata in the default column layout.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Input files, plain or gzip. Falls back to `inputs` from the config.
    inputs: Vec<PathBuf>,
    /// Snapshot path.
    #[arg(short, long, default_value = "graph.bin")]
    output: PathBuf,
    /// Build stats JSON path [default: <output>.stats.json].
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Bounding box as lat_min,lat_max,lon_min,lon_max.
    #[arg(long, value_parser = parse_bbox, allow_hyphen_values = true)]
    bbox: Option<BoundingBox>,
    /// Accept records anywhere on the globe.
    #[arg(long, conflicts_with = "bbox")]
    world: bool,
    #[arg(long)]
    photo_col: Option<usize>,
    #[arg(long)]
    user_col: Option<usize>,
    #[arg(long)]
    lon_col: Option<usize>,
    #[arg(long)]
    lat_col: Option<usize>,
    /// Field delimiter; `\t` or `tab` for tab.
    #[arg(long, value_parser = parse_delimiter)]
    delimiter: Option<char>,
    /// Abort on the first malformed coordinate.
    #[arg(long)]
    strict: bool,
    /// Minimum distinct users per kept edge.
    #[arg(long)]
    min_users: Option<u32>,
    /// Drop users with more distinct cells than this.
    #[arg(long)]
    max_locations_per_user: Option<usize>,
    /// Pair buffer budget, e.g. 256M.
    #[arg(long, value_parser = parse_bytes)]
    memory_budget: Option<u64>,
    #[arg(long)]
    spill_dir: Option<PathBuf>,
    /// No progress output on stderr.
    #[arg(short, long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Averaging {
    PerVertex,
    Pooled,
}

#[derive(Args)]
struct AnalysisFlags {
    /// Output directory.
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    knn_averaging: Option<Averaging>,
    /// Fixed lower cutoff for the degree fits.
    #[arg(long)]
    degree_xmin: Option<u64>,
    /// Fixed lower cutoff for the weight fits.
    #[arg(long)]
    weight_xmin: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    snapshot: PathBuf,
    #[command(flatten)]
    analysis: AnalysisFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Chebyshev,
    GreatCircle,
}

#[derive(Args)]
struct ExportArgs {
    snapshot: PathBuf,
    #[command(flatten)]
    analysis: AnalysisFlags,
    /// Comma-separated subset of edge_tsv, nodes_tsv, dist_tsv, knn_tsv, map_tsv, summary_json, graph_binary.
    #[arg(long, value_delimiter = ',', value_parser = parse_format)]
    formats: Vec<ExportFormat>,
    /// Map edges are kept when their endpoints are closer than this, in degrees.
    #[arg(long)]
    map_cutoff: Option<f64>,
    #[arg(long, value_enum)]
    map_metric: Option<Metric>,
}

#[derive(Args)]
struct SelfcheckArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Random instances for the oracle comparison.
    #[arg(long, default_value_t = 200)]
    instances: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1_000_000)]
    records: u64,
    #[arg(long, default_value_t = 10_000)]
    users: u64,
    #[arg(long, default_value_t = 50_000)]
    places: u64,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    ExportFormat::parse(s.trim()).ok_or_else(|| {
        let names: Vec<_> = ExportFormat::ALL.iter().map(|f| f.name()).collect();
        format!("unknown format {s:?}; expected one of {}", names.join(", "))
    })
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_analysis(cfg: &mut RunConfig, a: AnalysisFlags) {
    set(&mut cfg.export.output_dir, a.out_dir);
    set(
        &mut cfg.analysis.knn_averaging,
        a.knn_averaging.map(|k| match k {
            Averaging::PerVertex => KnnAveraging::PerVertex,
            Averaging::Pooled => KnnAveraging::Pooled,
        }),
    );
    if a.degree_xmin.is_some() {
        cfg.analysis.degree_x_min = a.degree_xmin;
    }
    if a.weight_xmin.is_some() {
        cfg.analysis.weight_x_min = a.weight_xmin;
    }
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn init_threads(n: usize) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    set(&mut cfg.threads, cli.threads);

    match cli.command {
        Command::Build(a) => {
            if !a.inputs.is_empty() {
                cfg.inputs = a.inputs;
            }
            set(&mut cfg.bbox, a.bbox);
            if a.world {
                cfg.bbox = BoundingBox::WORLD;
            }
            set(&mut cfg.layout.photo_id_col, a.photo_col);
            set(&mut cfg.layout.user_id_col, a.user_col);
            set(&mut cfg.layout.lon_col, a.lon_col);
            set(&mut cfg.layout.lat_col, a.lat_col);
            set(&mut cfg.layout.delimiter, a.delimiter);
            cfg.strict |= a.strict;
            set(&mut cfg.build.min_users_per_edge, a.min_users);
            if a.max_locations_per_user.is_some() {
                cfg.build.max_locations_per_user = a.max_locations_per_user;
            }
            set(&mut cfg.build.memory_budget_bytes, a.memory_budget);
            if a.spill_dir.is_some() {
                cfg.build.spill_dir = a.spill_dir;
            }
            cfg.validate()?;
            init_threads(cfg.thread_count())?;
            let stats = a.stats.unwrap_or_else(|| a.output.with_extension("stats.json"));
            commands::cmd_build(&cfg, &a.output, &stats, a.quiet)?;
        }
        Command::Analyze(a) => {
            apply_analysis(&mut cfg, a.analysis);
            cfg.validate()?;
            init_threads(cfg.thread_count())?;
            print_paths(&commands::cmd_analyze(&cfg, &a.snapshot)?);
        }
        Command::Export(a) => {
            apply_analysis(&mut cfg, a.analysis);
            if !a.formats.is_empty() {
                cfg.export.formats = a.formats.into_iter().collect();
            }
            set(&mut cfg.export.map_max_separation_deg, a.map_cutoff);
            set(
                &mut cfg.export.map_metric,
                a.map_metric.map(|m| match m {
                    Metric::Chebyshev => SeparationMetric::Chebyshev,
                    Metric::GreatCircle => SeparationMetric::GreatCircle,
                }),
            );
            cfg.validate()?;
            init_threads(cfg.thread_count())?;
            print_paths(&commands::cmd_export(&cfg, &a.snapshot)?);
        }
        Command::Selfcheck(a) => {
            init_threads(cfg.thread_count())?;
            let failed = selfcheck::run(a.seed.unwrap_or(cfg.seed), a.instances);
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
        Command::Generate(a) => {
            let synth = SyntheticConfig {
                records: a.records,
                users: a.users,
                places: a.places,
                bbox: cfg.bbox,
                seed: a.seed.unwrap_or(cfg.seed),
                ..Default::default()
            };
            cmd_generate_checked(&synth, &a.output)?;
        }
    }
    Ok(())
}

fn cmd_generate_checked(synth: &SyntheticConfig, out: &std::path::Path) -> Result<(), CliError> {
    if synth.users == 0 || synth.places == 0 {
        return Err(CliError::Config("users and places must be positive".into()));
    }
    let n = commands::cmd_generate(synth, out)?;
    eprintln!("{n} records written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("covisnet: {e}");
            e.exit_code()
        }
    }
}
