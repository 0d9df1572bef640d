use thiserror::Error;

/// Errors produced by population handling, sessions and experiments.
#[derive(Debug, Error)]
pub enum AuditError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Format(String),

    #[error("{0}")]
    Config(String),

    #[error("degenerate sampling distribution: {0}")]
    DegenerateDistribution(String),

    #[error("index {index} has zero sampling probability")]
    ImpossibleDraw { index: usize },

    #[error("{0}")]
    Sequencing(String),

    #[error("no unaudited transactions remain")]
    Exhausted,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AuditError {
    /// Short machine-readable category used by the CLI and HTTP layers.
    pub fn kind(&self) -> &'static str {
        match self {
            AuditError::Validation(_) => "validation",
            AuditError::Format(_) => "format",
            AuditError::Config(_) => "config",
            AuditError::DegenerateDistribution(_) => "degenerate_distribution",
            AuditError::ImpossibleDraw { .. } => "impossible_draw",
            AuditError::Sequencing(_) => "sequencing",
            AuditError::Exhausted => "exhausted",
            AuditError::Invariant(_) => "invariant",
            AuditError::Io(_) => "io",
            AuditError::Json(_) => "json",
        }
    }
}

impl From<csv::Error> for AuditError {
    fn from(err: csv::Error) -> Self {
        AuditError::Format(err.to_string())
    }
}

pub type Result<T, E = AuditError> = std::result::Result<T, E>;
