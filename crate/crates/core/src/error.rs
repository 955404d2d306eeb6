use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("non-numeric value {value:?} in column `{column}` at row {row}")]
    NonNumericValue { column: String, row: usize, value: String },

    #[error("missing value in column `{column}` at row {row}")]
    MissingValue { column: String, row: usize },

    #[error("non-positive weight {value} in column `{column}` at row {row}")]
    NonPositiveWeight { column: String, row: usize, value: f64 },

    #[error("unknown level {level:?} for categorical column `{column}` at row {row}")]
    UnknownLevel { column: String, row: usize, level: String },

    #[error("file contains no data rows")]
    EmptyFile,

    #[error("sample has {rows} rows but needs at least {required}")]
    TooFewRows { rows: usize, required: usize },

    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),

    #[error("design matrix has no columns")]
    EmptyDesign,

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("unsupported design: {0}")]
    UnsupportedDesign(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("design columns {found:?} do not match model columns {expected:?}")]
    ColumnMismatch { expected: Vec<String>, found: Vec<String> },

    #[error("design matrix is rank deficient (rank {rank} < {columns} columns)")]
    RankDeficient { rank: usize, columns: usize },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("no convergence after {iterations} iterations (score norm {score_norm:e})")]
    NoConvergence { iterations: usize, score_norm: f64 },

    #[error("complete separation detected: fitted probabilities collapse to 0/1 (|beta| = {beta_norm:e})")]
    Separation { beta_norm: f64 },

    #[error("fitted propensity is zero for row {row}")]
    ZeroPropensity { row: usize },

    #[error("joint inclusion probabilities required but the design does not provide them")]
    MissingJointProbabilities,

    #[error("sample size {requested} exceeds population size {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("stratum {stratum} has {available} units, {requested} requested")]
    StratumExhausted {
        stratum: usize,
        requested: usize,
        available: usize,
    },

    #[error("bootstrap replicate {replicate} failed {attempts} times: {last}")]
    BootstrapFailed {
        replicate: usize,
        attempts: usize,
        last: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            MissingColumn(_)
            | NonNumericValue { .. }
            | MissingValue { .. }
            | NonPositiveWeight { .. }
            | UnknownLevel { .. }
            | EmptyFile
            | TooFewRows { .. }
            | UnknownCovariate(_)
            | InvalidSample(_)
            | InvalidDesign(_)
            | ColumnMismatch { .. }
            | DimensionMismatch { .. }
            | SampleTooLarge { .. }
            | StratumExhausted { .. }
            | Csv(_) => ErrorCategory::Data,
            EmptyDesign | UnsupportedDesign(_) | InvalidArgument(_) | MissingJointProbabilities => ErrorCategory::Usage,
            RankDeficient { .. }
            | SingularSystem
            | NoConvergence { .. }
            | Separation { .. }
            | ZeroPropensity { .. }
            | BootstrapFailed { .. } => ErrorCategory::Numerical,
            Io(_) | Json(_) => ErrorCategory::Io,
        }
    }

    /// Short stable identifier for machine-readable error output.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            MissingColumn(_) => "MissingColumn",
            NonNumericValue { .. } => "NonNumericValue",
            MissingValue { .. } => "MissingValue",
            NonPositiveWeight { .. } => "NonPositiveWeight",
            UnknownLevel { .. } => "UnknownLevel",
            EmptyFile => "EmptyFile",
            TooFewRows { .. } => "TooFewRows",
            UnknownCovariate(_) => "UnknownCovariate",
            EmptyDesign => "EmptyDesign",
            InvalidSample(_) => "InvalidSample",
            InvalidDesign(_) => "InvalidDesign",
            UnsupportedDesign(_) => "UnsupportedDesign",
            InvalidArgument(_) => "InvalidArgument",
            DimensionMismatch { .. } => "DimensionMismatch",
            ColumnMismatch { .. } => "ColumnMismatch",
            RankDeficient { .. } => "RankDeficient",
            SingularSystem => "SingularSystem",
            NoConvergence { .. } => "NoConvergence",
            Separation { .. } => "Separation",
            ZeroPropensity { .. } => "ZeroPropensity",
            MissingJointProbabilities => "MissingJointProbabilities",
            SampleTooLarge { .. } => "SampleTooLarge",
            StratumExhausted { .. } => "StratumExhausted",
            BootstrapFailed { .. } => "BootstrapFailed",
            Io(_) => "IOFailure",
            Csv(_) => "CsvFailure",
            Json(_) => "JsonFailure",
        }
    }
}
