use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid mixture weights: {0}")]
    InvalidWeights(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported condition: {0}")]
    UnsupportedCondition(String),

    #[error("component {component} degenerated (effective weight {weight:.3e} below {floor:.3e})")]
    DegenerateComponent {
        component: usize,
        weight: f64,
        floor: f64,
    },

    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("all {restarts} EM restarts degenerated for K = {k}")]
    AllRestartsDegenerate { k: usize, restarts: usize },

    #[error("no K in {k_min}..={k_max} produced a usable fit")]
    NoUsableFit { k_min: usize, k_max: usize },

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("k-distance curve too short: need at least 3 values, got {0}")]
    CurveTooShort(usize),

    #[error("label vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("jaccard similarity of two empty sets is undefined")]
    BothEmpty,

    #[error("bootstrap count must be at least 1")]
    InvalidB,

    #[error("nothing to report")]
    EmptyReport,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
