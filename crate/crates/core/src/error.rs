use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite model parameter `{name}` = {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("bi-Hamiltonian pair is degenerate: |nu^2 - Omega| = {gap:e} is below {tolerance:e}")]
    Degenerate { gap: f64, tolerance: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Riccati linearisation is singular at t = {t}: |det X| = {det:e}")]
    Singular { t: f64, det: f64 },

    #[error("density sampling requires a normalisable packet (min eigenvalue of A = {margin})")]
    NonNormalisable { margin: f64 },

    #[error("invalid ensemble specification: {0}")]
    InvalidEnsemble(String),

    #[error("amplitude underflow at q = ({x}, {y}): R = {amplitude:e}")]
    AmplitudeUnderflow { x: f64, y: f64, amplitude: f64 },

    #[error("regime classification inconclusive: {0}")]
    Inconclusive(String),

    #[error("failed to parse {context}: {message}")]
    Parse { context: String, message: String },

    #[error("scenario validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

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

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
