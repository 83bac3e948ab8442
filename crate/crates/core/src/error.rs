use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("neighborhood graph is disconnected ({components} components); raise k_graph or accept the largest component")]
    Disconnected { components: usize },

    #[error("vertices {from} and {to} are unreachable")]
    Unreachable { from: usize, to: usize },

    #[error("requested {requested} dimensions but only {available} eigenvalues exceed the positivity floor")]
    RankDeficient { requested: usize, available: usize },

    #[error("empty hyperparameter grid")]
    EmptyGrid,

    #[error("every point was classified as noise; increase eps (currently {eps})")]
    AllNoise { eps: f64 },

    #[error("cluster {cluster} has {members} support members but needs at least {needed}")]
    Underdetermined {
        cluster: usize,
        members: usize,
        needed: usize,
    },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
