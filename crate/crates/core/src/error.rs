use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter outside the validity range of the 3GPP channel model.
    #[error("validity error: {0}")]
    Validity(String),

    /// A configuration key violating its constraint.
    #[error("config error at `{key}`: {constraint}")]
    Config { key: String, constraint: String },

    /// Required configuration keys are absent.
    #[error("missing required config keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    /// Courant number above one for the explicit sweeps.
    #[error("CFL violation: dt = {dt} s gives Courant number {courant:.4} > 1 (dz = {dz} m, max |v + A| = {speed} m/s)")]
    Cfl {
        dt: f64,
        dz: f64,
        speed: f64,
        courant: f64,
    },

    /// A numerical scheme produced an inadmissible state.
    #[error("scheme error: {0}")]
    Scheme(String),

    #[error("index {index} out of range for fleet of {len}")]
    Index { index: usize, len: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            constraint: constraint.into(),
        }
    }
}
