use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("line {line}: embedding dimension {found} does not match declared dimension {expected}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("missing threshold for `{0}`")]
    MissingThreshold(String),

    #[error("input dimension mismatch: expected {expected}, got {found}")]
    InputDimension { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("only one class present in {0}; both classes are required")]
    SingleClass(&'static str),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("missing entry for example `{0}`")]
    MissingExample(String),

    #[error("tree parse error at byte {position}: {message}")]
    TreeSyntax { position: usize, message: String },

    #[error("unknown pair/task: {0}")]
    UnknownAssignment(String),

    #[error("duplicate submission for pair `{pair_id}`, task `{task}`, rater `{rater_id}`")]
    Duplicate {
        pair_id: String,
        task: String,
        rater_id: String,
    },

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Stable snake_case name of the variant, for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::UnknownAttribute(_) => "unknown_attribute",
            Error::MissingThreshold(_) => "missing_threshold",
            Error::InputDimension { .. } => "input_dimension",
            Error::NonFinite(_) => "non_finite",
            Error::SingleClass(_) => "single_class",
            Error::Diverged { .. } => "diverged",
            Error::MissingExample(_) => "missing_example",
            Error::TreeSyntax { .. } => "tree_syntax",
            Error::UnknownAssignment(_) => "unknown_assignment",
            Error::Duplicate { .. } => "duplicate",
            Error::Conflict(_) => "conflict",
            Error::Invalid(_) => "invalid",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            context: path.into().display().to_string(),
            source,
        }
    }
}
