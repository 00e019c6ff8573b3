use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (|S + S^T|_F = {residual:e})")]
    NotSkewSymmetric { residual: f64 },

    #[error("matrix is not a rotation (|RR^T - I|_F = {orthogonality:e}, det = {det})")]
    NotARotation { orthogonality: f64, det: f64 },

    #[error("5x5 matrix does not have the navigation-state block structure")]
    NotNavState,

    #[error("quaternion is not unit length (norm = {norm})")]
    NonUnitQuaternion { norm: f64 },

    #[error(
        "insufficient landmarks: {found} available, at least {required} non-collinear required"
    )]
    InsufficientLandmarks { found: usize, required: usize },

    #[error("landmarks are collinear (smallest eigenvalue of Tr(M) I - M is {lambda_min:e}); at least three non-collinear landmarks are required")]
    CollinearLandmarks { lambda_min: f64 },

    #[error("landmark id {0} is not in the landmark map")]
    UnknownLandmarkId(u64),

    #[error("duplicate landmark id {0} in the landmark map")]
    DuplicateLandmarkId(u64),

    #[error("invalid landmark {id}: {reason}")]
    InvalidLandmark { id: u64, reason: String },

    #[error("observer state became non-finite")]
    NonFiniteState,

    #[error("gravity adaptation requested while gravity is known")]
    ModeError,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: unknown or malformed key `{key}`")]
    ParseKey {
        path: PathBuf,
        line: u64,
        key: String,
    },

    #[error("invalid value for `{key}`: {reason}")]
    Validation { key: String, reason: String },

    #[error("{path}:{line}: timestamp is not strictly increasing")]
    NonMonotonicTime { path: PathBuf, line: u64 },

    #[error("empty stream: {0}")]
    EmptyStream(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(key: &str, reason: impl Into<String>) -> Self {
        Error::Validation {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors raised while reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::NonMonotonicTime { .. }
        )
    }
}
