use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown cell state `{token}`")]
    UnknownState { line: usize, token: String },

    #[error("line {line}: conflicting cells for witness `{witness}` at unit `{unit}`")]
    DuplicateCell {
        line: usize,
        witness: String,
        unit: String,
    },

    #[error("invalid exclusion policy: {0}")]
    Policy(String),

    #[error("empty matrix: {0}")]
    EmptyMatrix(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("row {row} has no attestations")]
    UnattestedRow { row: usize },

    #[error("zero matrix: {0}")]
    ZeroMatrix(String),

    #[error("sparseness undefined: {0}")]
    Sparseness(String),

    #[error("non-finite value at iteration {iteration}: {context}")]
    NonFinite { iteration: usize, context: String },

    #[error("SVD did not converge within {max_iterations} sweeps ({rows}x{cols} input)")]
    SvdNoConvergence {
        max_iterations: usize,
        rows: usize,
        cols: usize,
    },

    #[error("NNLS did not converge within {iterations} iterations")]
    NnlsNoConvergence { iterations: usize },

    #[error("not a contested unit `{unit}`: {groups} reading group(s)")]
    NotContested { unit: String, groups: usize },

    #[error("unknown unit `{0}`")]
    UnknownUnit(String),

    #[error("unknown reading `{reading}` at unit `{unit}`")]
    UnknownReading { unit: String, reading: String },

    #[error("unknown witness `{0}`")]
    UnknownWitness(String),

    #[error("malformed artifact {path}: {message}")]
    Artifact { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag, used for CLI error JSON and FFI status codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::UnknownState { .. } | Error::DuplicateCell { .. } => {
                "parse"
            }
            Error::Policy(_) | Error::Config(_) => "config",
            Error::EmptyMatrix(_) | Error::ZeroMatrix(_) | Error::UnattestedRow { .. } => "empty",
            Error::Dimension(_) => "dimension",
            Error::Sparseness(_) => "sparseness",
            Error::NonFinite { .. }
            | Error::SvdNoConvergence { .. }
            | Error::NnlsNoConvergence { .. } => "numerical",
            Error::NotContested { .. }
            | Error::UnknownUnit(_)
            | Error::UnknownReading { .. }
            | Error::UnknownWitness(_) => "query",
            Error::Artifact { .. } => "artifact",
            Error::Io(_) => "io",
            Error::Json(_) | Error::Csv(_) => "format",
        }
    }
}
