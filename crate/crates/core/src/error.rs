use std::path::PathBuf;

use crate::room::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid room: {}", join_violations(.0))]
    InvalidRoom(Vec<Violation>),

    #[error("receiver coincides with an image source (distance {distance:e} m)")]
    ZeroDistance { distance: f64 },

    #[error("impulse response carries no energy")]
    SilentRir,

    #[error("decay curve never reaches {lower_db} dB (or fewer than {min_samples} samples in [{lower_db}, {upper_db}] dB)")]
    InsufficientRange {
        upper_db: f64,
        lower_db: f64,
        min_samples: usize,
    },

    #[error("C50 undefined: no energy left at 50 ms")]
    C50Undefined,

    #[error("Eyring formula undefined for mean absorption {0}")]
    EyringDomain(f64),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite activation in {layer}")]
    NonFinite { layer: &'static str },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("forward cache does not match the parameters it is applied to")]
    CacheMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rejection sampling exhausted after {0} attempts")]
    SamplerExhausted(usize),

    #[error("room {index} failed: {source}")]
    RoomFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: unsupported version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: checksum mismatch")]
    Checksum { path: PathBuf },

    #[error("{0}: output directory is not empty (use --overwrite)")]
    OutputExists(PathBuf),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
