use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse {context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid image {image}: {message}")]
    InvalidImage { image: String, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid taxonomy: {}", .0.join("; "))]
    InvalidTaxonomy(Vec<String>),

    #[error("invalid detector profile: {0}")]
    InvalidProfile(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("no stage-2 detector for general class `{0}`")]
    MissingStage2(String),

    #[error("dataset has no sequences; sequence routing needs them")]
    MissingSequences,

    #[error("routing mode {actual:?} does not match the requested operation ({expected:?})")]
    ModeMismatch {
        expected: crate::router::RoutingMode,
        actual: crate::router::RoutingMode,
    },

    #[error("detector failed on image {image}: {source}")]
    Detector {
        image: String,
        #[source]
        source: Box<Error>,
    },

    #[error("detector protocol violation: {0}")]
    Protocol(String),

    #[error("failed to launch detector `{command}`: {source}")]
    Launch {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("class `{0}` has no ground truth")]
    NoGroundTruth(String),

    #[error("no matched detections")]
    NoMatches,

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("matrix shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),

    #[error("coordinate ({0}, {1}) outside matrix")]
    CoordinateOutOfBounds(usize, usize),

    #[error("merged classes have zero total prior")]
    ZeroPriorSum,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures raised by a detector or its wire protocol.
    pub fn is_detector_failure(&self) -> bool {
        matches!(
            self,
            Error::Detector { .. } | Error::Protocol(_) | Error::Launch { .. }
        )
    }
}
