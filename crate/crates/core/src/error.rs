use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch in {block}: expected {expected}, found {found}")]
    Shape {
        block: String,
        expected: String,
        found: String,
    },

    #[error("unsupported model format version {found} (this build reads version {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("model kind `{kind}` does not match file contents: {reason}")]
    KindMismatch { kind: String, reason: String },

    #[error("non-finite value in {block}")]
    NonFinite { block: String },

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("unknown class `{class}` for task `{task}`")]
    UnknownClass { task: String, class: String },

    #[error("class {class} out of range for task `{task}` with {class_count} classes")]
    ClassOutOfRange {
        task: String,
        class: usize,
        class_count: usize,
    },

    #[error("missing label for task `{0}`")]
    MissingLabel(String),

    #[error("invalid label vector for task `{task}`: {reason}")]
    InvalidLabel { task: String, reason: String },

    #[error("labels supplied for a layer without task heads")]
    UnexpectedLabels,

    #[error("missing modality `{0}`")]
    MissingModality(String),

    #[error("input does not look standardized: mean |z| = {mean_abs_z:.3} exceeds {tolerance}")]
    NotStandardized { mean_abs_z: f64, tolerance: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Coarse classification used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_)
            | Error::UnknownTask(_)
            | Error::UnknownClass { .. } => ErrorCategory::Usage,
            Error::NonFinite { .. } => ErrorCategory::Numeric,
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn shape(block: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            block: block.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
