use alloc::string::String;
use alloc::vec::Vec;

/// Error categories surfaced by the core crate.
///
/// The category names double as the machine-parseable tag the CLI prints on
/// failure, see [`Error::category`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("input too short: {0}")]
    InputTooShort(String),
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("attention mask row {row} has no attendable position")]
    EmptyMaskRow { row: usize },
    #[error("stream state error: {0}")]
    State(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Short stable tag for the error kind.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "dimension",
            Error::Parameter(_) => "parameter",
            Error::InputTooShort(_) => "input-too-short",
            Error::Vocabulary(_) => "vocabulary",
            Error::EmptyMaskRow { .. } => "mask",
            Error::State(_) => "state",
            Error::NonFinite(_) => "non-finite",
            Error::Corpus(_) => "corpus",
            Error::Format(_) => "format",
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
