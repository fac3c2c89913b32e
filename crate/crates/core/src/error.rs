use thiserror::Error;

/// Errors produced anywhere in the inversion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("symmetric factorization failed at every jitter level")]
    SingularAfterJitter,

    #[error("ensemble needs at least 2 members, got {0}")]
    EnsembleTooSmall(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("division by a jet with zero value")]
    DivisionByZero,

    #[error("argument outside function domain: {0}")]
    DomainError(String),

    #[error("observation operator produced a non-finite value")]
    NonFiniteOutput,

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("reference values are all zero")]
    ZeroReference,

    #[error("true parameter value is zero")]
    ZeroTrueValue,

    #[error("ensemble reinitialized {0} times without recovering")]
    TooManyReinits(usize),

    #[error("linear solver did not converge: {0}")]
    SolverDiverged(String),

    #[error("quadrature denominator underflowed at x={x}, t={t}")]
    QuadratureUnstable { x: f64, t: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trial {index} failed: {source}")]
    Trial {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable identifier, used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSymmetric(_) => "not_symmetric",
            Error::SingularAfterJitter => "singular_after_jitter",
            Error::EnsembleTooSmall(_) => "ensemble_too_small",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::DivisionByZero => "division_by_zero",
            Error::DomainError(_) => "domain_error",
            Error::NonFiniteOutput => "non_finite_output",
            Error::UnknownProblem(_) => "unknown_problem",
            Error::ZeroReference => "zero_reference",
            Error::ZeroTrueValue => "zero_true_value",
            Error::TooManyReinits(_) => "too_many_reinits",
            Error::SolverDiverged(_) => "solver_diverged",
            Error::QuadratureUnstable { .. } => "quadrature_unstable",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Trial { source, .. } => source.kind(),
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
            Error::Csv(_) => "csv_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
