use thiserror::Error;

/// Errors surfaced by every layer of the crate.
///
/// The first three variants map onto the distinct process exit codes used by
/// the CLI: invalid input, an exhaustive-enumeration size cap, and a broken
/// internal invariant. The refinement signals (`GroundEvent`,
/// `RebaseRequired`, `Exhausted`) are control-flow outcomes of cover
/// operations rather than failures and normally never escape a search loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("size cap exceeded: {0}")]
    Size(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// The event is ground and admits no further refinement.
    #[error("event is ground and cannot be refined")]
    GroundEvent,
    /// The event's segment hypothesis is ground; the caller must rebase
    /// instead of refining.
    #[error("segment hypothesis is ground; rebase required")]
    RebaseRequired,
    /// Every event in the cover is ground.
    #[error("cover is fully ground; refinement exhausted")]
    Exhausted,
}

pub type Result<T> = std::result::Result<T, Error>;
