//! Error type shared by every module of the crate.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Malformed expression text; `offset` is a byte offset into the input.
    Syntax { offset: usize, message: String },
    UnknownIdentifier { offset: usize, name: String },
    DimensionMismatch { expected: usize, found: usize },
    /// An integral curve left the working box.
    FlowExit { point: Vec<f64>, time: f64 },
    StepUnderflow { time: f64 },
    /// The field has a `∂/∂t` component that does not vanish on `t = 0`.
    TransverseComponent { max_abs: f64 },
    Step2Failed { rank: usize, dim: usize },
    InsufficientPoints { usable: usize },
    QuadratureNonconvergence { estimate: f64, error: f64 },
    NonFinite { context: &'static str },
    SupportViolation { context: &'static str },
    OutOfRange { value: f64, lo: f64, hi: f64 },
    MissingSupport,
    MissingDerivative,
    NotNested { inner: &'static str, outer: &'static str },
    NoAdmissibleDelta { resolution: f64 },
    RankDeficient { rank: usize, expected: usize },
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Syntax { offset, message } => {
                write!(f, "syntax error at offset {offset}: {message}")
            }
            Error::UnknownIdentifier { offset, name } => {
                write!(f, "unknown identifier `{name}` at offset {offset}")
            }
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::FlowExit { point, time } => {
                write!(f, "integral curve left the working box at time {time:e} (point {point:?})")
            }
            Error::StepUnderflow { time } => write!(f, "step size underflow at time {time:e}"),
            Error::TransverseComponent { max_abs } => {
                write!(f, "d/dt coefficient does not vanish at t = 0 (max |c| = {max_abs:e})")
            }
            Error::Step2Failed { rank, dim } => {
                write!(f, "step-2 bracket condition fails: rank {rank} < {dim}")
            }
            Error::InsufficientPoints { usable } => {
                write!(f, "fit needs at least 3 points above the noise floor, got {usable}")
            }
            Error::QuadratureNonconvergence { estimate, error } => {
                write!(f, "quadrature did not converge (estimate {estimate:e}, error {error:e})")
            }
            Error::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Error::SupportViolation { context } => write!(f, "support violation: {context}"),
            Error::OutOfRange { value, lo, hi } => {
                write!(f, "value {value} outside admissible range [{lo}, {hi})")
            }
            Error::MissingSupport => write!(f, "function has no declared compact support"),
            Error::MissingDerivative => {
                write!(f, "function has no closed-form derivative and finite differences are disabled")
            }
            Error::NotNested { inner, outer } => {
                write!(f, "{inner} is not compactly contained in {outer}")
            }
            Error::NoAdmissibleDelta { resolution } => {
                write!(f, "no admissible flow radius found at resolution {resolution:e}")
            }
            Error::RankDeficient { rank, expected } => {
                write!(f, "frame is rank deficient: rank {rank}, expected {expected}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T, E = Error> = core::result::Result<T, E>;
