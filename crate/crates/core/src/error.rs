use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A matrix does not have the zero/skew pattern or group structure expected.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("simulation diverged at step {step} (t = {time:.6e} s), node {node}")]
    Divergence { step: u64, time: f64, node: usize },

    #[error("no measurement available at t = {time:.6e} s (log covers [{start:.6e}, {end:.6e}])")]
    MissingMeasurement { time: f64, start: f64, end: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}
