use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvemError {
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),
    #[error("missing factor `{0}` in data")]
    MissingFactor(String),
    #[error("categorical factor `{0}` has fewer than 2 levels")]
    TooFewLevels(String),
    #[error("numeric factor `{0}` is constant in the training data")]
    ConstantColumn(String),
    #[error("unseen level `{level}` for factor `{factor}`")]
    UnseenLevel { factor: String, level: String },
    #[error("factor `{factor}` has kind {found}, expected {expected}")]
    KindMismatch {
        factor: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("design matrix has {got} columns, model expects {expected}")]
    ColumnMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("all observation weights are zero")]
    ZeroWeights,
    #[error("binomial response must be coded 0/1, found {0}")]
    NonBinaryResponse(f64),
    #[error("cross-validation fold left a single response class")]
    SingleClassFold,
    #[error("infeasible mixture group: {0}")]
    InfeasibleMixture(String),
    #[error("mixture rejection budget exhausted after {attempts} attempts ({accepted} accepted)")]
    RejectionBudget { attempts: usize, accepted: usize },
    #[error("name mismatch: {0}")]
    NameMismatch(String),
    #[error("candidate table is empty")]
    EmptyCandidates,
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("unsupported document version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SvemError>;

impl SvemError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        use SvemError::*;
        match self {
            InvalidArgument(_) | Config(_) | Json(_) | Version { .. } | NameMismatch(_) | InfeasibleMixture(_) => 2,
            NonFinite(_) | ZeroWeights | Numeric(_) | RejectionBudget { .. } => 4,
            _ => 3,
        }
    }
}
