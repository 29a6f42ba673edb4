use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("XML parse error at line {line}, column {column}: {message}")]
    Xml {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("CSV error: {0}")]
    Csv(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid Petri net: {0}")]
    InvalidNet(String),

    #[error("transition {transition} is not enabled")]
    NotEnabled { transition: String },

    #[error("unknown decision point {0}")]
    UnknownDecisionPoint(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("too many attribution units for exact computation ({units} > {max}); use sampled Shapley values")]
    TooManyUnits { units: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("all reports are degenerate")]
    AllDegenerate,

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
