use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A value is outside the range its type allows. `field` names the offending input.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    #[error("unknown direction label `{0}`")]
    UnknownDirection(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("direction polygons `{0}` and `{1}` overlap")]
    OverlappingDirections(String, String),

    #[error("vehicle {index} leaves the frame at frame {frame}")]
    VehicleOutOfBounds { index: usize, frame: u64 },

    #[error("fixture parse error at line {line}: {reason}")]
    Fixture { line: usize, reason: String },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid { .. } => "invalid",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::UnknownDirection(_) => "unknown_direction",
            Error::Empty(_) => "empty",
            Error::OverlappingDirections(..) => "overlapping_directions",
            Error::VehicleOutOfBounds { .. } => "vehicle_out_of_bounds",
            Error::Fixture { .. } => "fixture",
        }
    }
}
