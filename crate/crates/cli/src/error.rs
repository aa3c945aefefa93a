use std::process::ExitCode;

use covisnet::export::ExportError;
use covisnet::snapshot::SnapshotError;
use covisnet::{BuildError, IngestError};

/// Errors grouped by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration file or flag values. Exit code 2.
    Config(String),
    /// Unreadable or unusable input: missing files, strict-mode parse errors,
    /// corrupt snapshots, inputs that produce an empty graph. Exit code 3.
    Input(String),
    /// Anything else: output or spill I/O, broken invariants. Exit code 4.
    Internal(String),
    /// `selfcheck` ran but some checks failed. Exit code 1.
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::ChecksFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Internal(_) => 4,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Internal(m) => write!(f, "error: {m}"),
            CliError::ChecksFailed(n) => write!(f, "{n} self-check(s) failed"),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SnapshotError> for CliError {
    fn from(e: SnapshotError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<ExportError> for CliError {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::InvalidCutoff(_) => CliError::Config(e.to_string()),
            ExportError::MissingMetric(_) | ExportError::BadEdgeLine { .. } => CliError::Input(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}
