use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("wavepacket support [{lo}, {hi}] does not fit in the box [-{half_width}, {half_width}]")]
    SupportOutsideBox { lo: i64, hi: i64, half_width: usize },

    #[error("zero wavepacket")]
    ZeroState,

    #[error("singular pivot in tridiagonal solve at row {row}")]
    SingularSolve { row: usize },

    #[error("found {found} zeros of the trace polynomial, expected {expected}")]
    ZeroCountMismatch { found: usize, expected: usize },

    #[error("substitution does not generate a fixed point: {0}")]
    NoFixedPoint(String),

    #[error("need at least {needed} usable points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("empty sample set: {0}")]
    EmptySamples(&'static str),

    #[error("half-width {half_width} exceeds the exact-oracle limit {limit}")]
    BoxTooLarge { half_width: usize, limit: usize },

    #[error("potential family `{0}` has no circle phase")]
    NotDynamical(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
