use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty kpageflags dump")]
    EmptyDump,
    #[error("malformed kpageflags dump: {0} bytes is not a multiple of 8")]
    MalformedDump(usize),
    #[error("usage map: invalid character {ch:?} at offset {offset}")]
    Fixture { offset: usize, ch: char },
    #[error("snapshot has no pages")]
    EmptySnapshot,
    #[error("page size {0} is not a power of two")]
    PageSize(u64),
    #[error("insufficient data: {0} regions, at least 2 are needed")]
    InsufficientData(usize),
    #[error("degenerate profile: every state was pruned")]
    DegenerateProfile,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    Convergence { iterations: usize, residual: f64 },
    #[error("profile file: {0}")]
    ProfileFile(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("series: {0}")]
    Series(String),
    #[error("page frame {pfn} out of range for {len} pages")]
    OutOfRange { pfn: usize, len: usize },
    #[error("degenerate correlation: {0}")]
    DegenerateCorrelation(&'static str),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of internal invariants, as opposed to bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Convergence { .. } | Error::Invariant(_))
    }
}
