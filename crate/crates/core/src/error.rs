use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the model and fitting code.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation (`field` names it).
    Domain { field: &'static str, reason: String },
    /// A value is outside a tabulated range; no extrapolation is done.
    OutOfRange { value: f64, lo: f64, hi: f64 },
    /// The vacuum coupling rate needs the motional-capacitance derivative.
    MissingDerivative,
    /// A simulated segment ran away past the occupancy cap.
    Instability {
        segment: usize,
        occupancy: f64,
        cap: f64,
    },
    /// A fit could not be set up (bad bounds, too little data, non-monotone sweep...).
    Setup(String),
    /// The transparency feature could not be located in an EIT trace.
    FeatureNotFound(String),
    /// A linear system was singular.
    Singular,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain { field, reason } => write!(f, "invalid `{field}`: {reason}"),
            Error::OutOfRange { value, lo, hi } => {
                write!(f, "value {value:e} outside table range [{lo:e}, {hi:e}]")
            }
            Error::MissingDerivative => f.write_str(
                "vacuum coupling rate requires an externally supplied motional-capacitance derivative",
            ),
            Error::Instability { segment, occupancy, cap } => write!(
                f,
                "segment {segment} is unstable: occupancy {occupancy:e} exceeds cap {cap:e}"
            ),
            Error::Setup(msg) => write!(f, "fit setup error: {msg}"),
            Error::FeatureNotFound(msg) => write!(f, "transparency feature not found: {msg}"),
            Error::Singular => f.write_str("singular linear system"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn domain(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        field,
        reason: reason.into(),
    }
}
