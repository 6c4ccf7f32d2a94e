use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    Dimension {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("training failed on parameter `{param}`: {reason}")]
    Training { param: String, reason: String },

    #[error("cycle detected through back edge {src} -> {dst}")]
    Cycle { src: usize, dst: usize, cycle: Vec<usize> },

    #[error("operation `{op}` is not in the vocabulary")]
    Vocabulary { op: String },

    #[error("invalid cell: {0}")]
    InvalidCell(String),

    #[error("missing data for record `{id}`: {reason}")]
    MissingData { id: String, reason: String },

    #[error("invalid state: {0}")]
    State(String),

    #[error("line {line}: {reason}")]
    Load { line: usize, reason: String },

    #[error("{count} invalid record(s); first at line {first_line}: {first_reason}")]
    Validation {
        count: usize,
        first_line: usize,
        first_reason: String,
    },

    #[error("empty search space")]
    EmptySpace,

    #[error("no records below the FLOPs threshold {threshold} M")]
    EmptySubset { threshold: f64 },

    #[error("proxy `{name}` not present; available: [{available}]")]
    MissingProxy { name: String, available: String },

    #[error("correlation undefined: {0}")]
    Correlation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Dimension {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Contract(_) => "contract",
            Error::Training { .. } => "training",
            Error::Cycle { .. } => "cycle",
            Error::Vocabulary { .. } => "vocabulary",
            Error::InvalidCell(_) => "invalid-cell",
            Error::MissingData { .. } => "missing-data",
            Error::State(_) => "state",
            Error::Load { .. } => "load",
            Error::Validation { .. } => "validation",
            Error::EmptySpace => "empty-space",
            Error::EmptySubset { .. } => "empty-subset",
            Error::MissingProxy { .. } => "missing-proxy",
            Error::Correlation(_) => "correlation",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
