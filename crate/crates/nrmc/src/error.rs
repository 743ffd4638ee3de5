use thiserror::Error;

/// Errors shared by all modules of the crate.
///
/// `Config`-like variants (bad user input) are distinguished from runtime
/// failures so the CLI can map them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("log density ratio is NaN")]
    NanLogRatio,

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("target has no discrete coordinates")]
    NoDiscreteCoords,

    #[error("state carries no momentum vector")]
    NoMomentum,

    #[error("coordinate subset {start}..{end} out of range for dimension {dim}")]
    BadSubset {
        start: usize,
        end: usize,
        dim: usize,
    },

    #[error("empty series")]
    EmptySeries,

    #[error("series of length {len} too short for max_lag {max_lag}")]
    SeriesTooShort { len: usize, max_lag: usize },

    #[error("series has no variance around the supplied mean; autocorrelation time undefined")]
    ZeroVariance,

    #[error("invalid parameter {name}: {why}")]
    BadParam { name: &'static str, why: String },

    #[error("config: {0}")]
    Config(String),

    #[error("sweep grid has {cells} cells, exceeding the cap of {cap}")]
    GridTooLarge { cells: usize, cap: usize },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration rather than a
    /// failure while running. The CLI exits 1 for these and 2 otherwise.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::BadParam { .. } | Error::GridTooLarge { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
