use thiserror::Error;

/// Errors produced by parsing, estimation and enrichment routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("empty matrix: {0}")]
    EmptyMatrix(String),

    #[error("duplicate sample id {id:?} at column {column}")]
    DuplicateSample { id: String, column: usize },

    #[error("duplicate gene set name {0:?}")]
    DuplicateSetName(String),

    #[error("unknown sample id {0:?}")]
    UnknownSample(String),

    #[error("class too small: class {class} has {size} sample(s), need at least 2")]
    ClassTooSmall { class: u8, size: usize },

    #[error("sample {0:?} assigned to both classes")]
    OverlappingDesign(String),

    #[error("zero total variance: all samples are identical")]
    ZeroVariance,

    #[error("no differential signal between the two classes")]
    NoDifferentialSignal,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("undefined t statistic: both samples have zero variance and equal means")]
    UndefinedStatistic,

    #[error("gene set {0:?} shares no genes with the direction's gene universe")]
    EmptyIntersection(String),

    #[error("singular value decomposition did not converge")]
    NoConvergence,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
