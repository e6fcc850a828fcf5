//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A dataset file could not be read.
    #[error("load error: {path}: {reason}")]
    Load { path: String, reason: String },

    /// On-disk data violates the expected layout (dims, labels, lengths).
    #[error("format error: {0}")]
    Format(String),

    /// An operation received an input too small to work on.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A partition cannot satisfy its constraints (e.g. more clients than rows).
    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    /// A model configuration is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// Training produced a non-finite loss.
    #[error("divergence at batch {batch}: loss is not finite")]
    Divergence { batch: usize },

    /// A client failed during a federated round.
    #[error("client {client} failed: {source}")]
    ClientFailure {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    /// Parameter sets disagree on an entry's presence or shape.
    #[error("aggregation error: entry '{entry}': {reason}")]
    Aggregation { entry: String, reason: String },

    /// A metric is undefined for the given labels (e.g. single-class input).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A representation vector has zero norm, so cosine similarity is undefined.
    #[error("degenerate representation: zero-norm vector at row {row}")]
    DegenerateRepresentation { row: usize },

    /// A federation protocol invariant was violated.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// The operation is not available for this model.
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}
