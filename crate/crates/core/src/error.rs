use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A configuration field violates its documented precondition.
    InvalidConfig(String),
    /// An extrema window ran past the maximum context before enough extrema
    /// were found.
    WindowOverflow {
        found: usize,
        wanted: usize,
        window_end: usize,
        max_context: usize,
    },
    EmptySearchSpace,
    TooManyBases { requested: usize, available: usize },
    ShapeMismatch(String),
    ContextOverflow { len: usize, max_context: usize },
    /// A NaN or infinity appeared during a model computation.
    NonFinite { stage: &'static str, layer: Option<usize> },
    InvalidDistribution(String),
    Divergence { step: usize, loss: f64 },
    InvalidPlacement(String),
    TaskTooLarge { required: usize, available: usize },
    NoExtrema,
    /// An extrema window found no turning point: its extremum sits on the
    /// window's first position.
    FlatWindow { start: usize, len: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::WindowOverflow {
                found,
                wanted,
                window_end,
                max_context,
            } => write!(
                f,
                "extrema window ends at {window_end} > max context {max_context} after {found} of {wanted} extrema"
            ),
            Error::EmptySearchSpace => write!(f, "base search space is empty"),
            Error::TooManyBases {
                requested,
                available,
            } => write!(
                f,
                "requested {requested} bases but only {available} are available"
            ),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::ContextOverflow { len, max_context } => {
                write!(f, "sequence of {len} tokens exceeds max context {max_context}")
            }
            Error::NonFinite { stage, layer } => match layer {
                Some(l) => write!(f, "non-finite value in {stage} of layer {l}"),
                None => write!(f, "non-finite value in {stage}"),
            },
            Error::InvalidDistribution(msg) => write!(f, "invalid distribution: {msg}"),
            Error::Divergence { step, loss } => {
                write!(f, "training diverged at step {step} (loss = {loss})")
            }
            Error::InvalidPlacement(msg) => write!(f, "invalid placement: {msg}"),
            Error::TaskTooLarge {
                required,
                available,
            } => write!(
                f,
                "task needs {required} tokens but only {available} are available"
            ),
            Error::NoExtrema => write!(f, "no extrema inside the requested window"),
            Error::FlatWindow { start, len } => {
                write!(f, "window of {len} starting at {start} has no turning point")
            }
        }
    }
}

impl core::error::Error for Error {}
