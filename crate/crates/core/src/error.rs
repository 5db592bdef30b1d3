use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("payload size mismatch: header expects {expected} bytes, found {found}")]
    PayloadSizeMismatch { expected: usize, found: usize },

    #[error("unsupported dtype `{0}`")]
    UnsupportedDtype(String),

    #[error("dims mismatch: {left:?} vs {right:?}")]
    DimsMismatch { left: [usize; 3], right: [usize; 3] },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("volume {dims:?} is smaller than one tile of edge {edge}")]
    VolumeTooSmall { dims: [usize; 3], edge: usize },

    #[error("size mismatch: expected edge {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("tile coverage {kind} at voxel ({x}, {y})")]
    Coverage { kind: CoverageFault, x: usize, y: usize },

    #[error("tube {index} invalid: {reason}")]
    InvalidTube { index: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("slice index {index} out of range for axis {axis} of length {len}")]
    IndexOutOfRange { axis: char, index: usize, len: usize },

    #[error("missing external prediction {0}")]
    MissingPrediction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageFault {
    Gap,
    Overlap,
}

impl std::fmt::Display for CoverageFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoverageFault::Gap => f.write_str("gap"),
            CoverageFault::Overlap => f.write_str("overlap"),
        }
    }
}

impl Error {
    /// Stable machine-readable code, used by the CLI and the HTTP service.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io_error",
            Error::MalformedHeader(_) => "malformed_header",
            Error::PayloadSizeMismatch { .. } => "payload_size_mismatch",
            Error::UnsupportedDtype(_) => "unsupported_dtype",
            Error::DimsMismatch { .. } => "dims_mismatch",
            Error::InvalidVolume(_) => "invalid_volume",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::VolumeTooSmall { .. } => "volume_too_small",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::Coverage { .. } => "coverage",
            Error::InvalidTube { .. } => "invalid_tube",
            Error::Empty(_) => "empty_input",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::MissingPrediction(_) => "missing_input",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
