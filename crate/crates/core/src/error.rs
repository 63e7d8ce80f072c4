use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm is at or below the zero threshold")]
    ZeroNorm,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("forward cache already consumed by a backward pass")]
    StaleCache,

    #[error("invalid batch size {batch_size} for {available} training samples")]
    InvalidBatchSize { batch_size: usize, available: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("score list is empty")]
    EmptyScores,

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("gallery is empty")]
    EmptyGallery,

    #[error("training diverged at iteration {iteration}: {detail}")]
    DivergedRun { iteration: u64, detail: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ZeroNorm => "zero_norm",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InvalidConfig(_) => "invalid_config",
            Error::StaleCache => "stale_cache",
            Error::InvalidBatchSize { .. } => "invalid_batch_size",
            Error::InsufficientSamples(_) => "insufficient_samples",
            Error::EmptyScores => "empty_scores",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::EmptyGallery => "empty_gallery",
            Error::DivergedRun { .. } => "diverged_run",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Toml(_) => "toml",
            Error::Csv(_) => "csv",
        }
    }
}
