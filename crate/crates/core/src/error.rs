use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("shrinkage derivative undefined: |r| = {magnitude} sits on the threshold {threshold}")]
    Boundary { magnitude: f64, threshold: f64 },

    #[error("non-finite value in layer {layer}, variable {variable}")]
    NonFinite { layer: usize, variable: String },

    #[error("training diverged in phase {phase}: validation loss is not finite")]
    Diverged {
        phase: String,
        report: Box<crate::training::TrainReport>,
    },

    #[error("{estimator}: checkpoint {path} not found (run `beamscope train` first or enable inline training)")]
    MissingCheckpoint { estimator: String, path: PathBuf },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
