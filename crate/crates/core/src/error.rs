use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. Every variant carries a stable, module-prefixed code
/// (see [`Error::code`]) so front ends can emit machine-parseable failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("column not found: {0}")]
    ColumnNotFound(String),
    #[error("only {found} complete rows, need at least {needed}")]
    TooFewRows { found: usize, needed: usize },
    #[error("duplicate time stamp at row {row}")]
    DuplicateTime { row: usize },
    #[error("month subsetting: {0}")]
    Months(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("GPD fit failed: {0}")]
    GpdFit(String),
    #[error("too few exceedances: {found} above threshold, need {needed}")]
    TooFewExceedances { found: usize, needed: usize },
    #[error("blended CDF not increasing near x = {x}; widen the blend window")]
    NotMonotone { x: f64 },

    #[error("degenerate spread: {0}")]
    DegenerateSpread(String),
    #[error("level {level} not attained on grid; achievable range is ({min}, {max})")]
    EmptyLevelSet { level: f64, min: f64, max: f64 },
    #[error("level set at {level} splits into {pieces} pieces; increase the bandwidth")]
    FragmentedLevelSet { level: f64, pieces: usize },
    #[error("isoline slope not strictly negative between vertices {index} and {}", index + 1)]
    SlopeViolation { index: usize },
    #[error("isoline has {0} vertices, need at least 2")]
    ShortIsoline(usize),

    #[error("diagnostic: {0}")]
    Diagnostic(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable `module.kind` identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "ingest.io",
            Error::Csv(_) => "ingest.csv",
            Error::ColumnNotFound(_) => "ingest.column_not_found",
            Error::TooFewRows { .. } => "ingest.too_few_rows",
            Error::DuplicateTime { .. } => "ingest.duplicate_time",
            Error::Months(_) => "ingest.months",
            Error::InvalidArgument(_) => "config.invalid_argument",
            Error::GpdFit(_) => "marginal.gpd_fit",
            Error::TooFewExceedances { .. } => "marginal.too_few_exceedances",
            Error::NotMonotone { .. } => "marginal.not_monotone",
            Error::DegenerateSpread(_) => "surface.degenerate_spread",
            Error::EmptyLevelSet { .. } => "surface.empty_level_set",
            Error::FragmentedLevelSet { .. } => "surface.fragmented_level_set",
            Error::SlopeViolation { .. } => "project.slope_violation",
            Error::ShortIsoline(_) => "surface.short_isoline",
            Error::Diagnostic(_) => "diagnose.failed",
        }
    }
}
