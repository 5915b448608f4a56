use thiserror::Error;

use crate::io::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("elevation {elevation:.6} rad outside field of view [{min:.6}, {max:.6}]")]
    OutOfFov { elevation: f64, min: f64, max: f64 },

    #[error("point norm {norm} m does not exceed receiver radius {receiver_radius} m")]
    DegenerateRange { norm: f64, receiver_radius: f64 },

    #[error("dimension mismatch: expected {expected:?} (rows, cols), found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("destination normals are missing or do not match the image")]
    MissingNormals,

    #[error("degenerate geometry: normal equations condition number {condition:e}")]
    DegenerateGeometry { condition: f64 },

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short, stable identifier used in machine-readable CLI output and
    /// mapped onto FFI status codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidIntrinsics(_) => "invalid_intrinsics",
            Error::OutOfFov { .. } => "out_of_fov",
            Error::DegenerateRange { .. } => "degenerate_range",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::EmptyInput(_) => "empty_input",
            Error::MissingNormals => "missing_normals",
            Error::DegenerateGeometry { .. } => "degenerate_geometry",
            Error::InvalidPose(_) => "invalid_pose",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Format(f) => f.kind(),
            Error::Io(_) => "io",
        }
    }
}
