use thiserror::Error;

pub type Result<T> = std::result::Result<T, PlvcError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlvcError {
    #[error("invalid domain: lo = {lo} must be strictly below hi = {hi}")]
    InvalidDomain { lo: f64, hi: f64 },

    #[error("unsupported spline degree {0} (only 2 and 3 are supported)")]
    UnsupportedDegree(usize),

    #[error("basis dimension {dim} too small for degree {degree} (need at least {min})")]
    BasisTooSmall { dim: usize, degree: usize, min: usize },

    #[error("index value {z} outside basis support [{lo}, {hi}]")]
    OutOfDomain { z: f64, lo: f64, hi: f64 },

    #[error("ingestion error at row {row:?}, column {column:?}: {message}")]
    Ingestion {
        row: Option<usize>,
        column: Option<String>,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("linear-block columns {columns:?} are collinear with the varying-coefficient space")]
    Collinear { columns: Vec<String> },

    #[error("no residual degrees of freedom: n = {n}, parameters = {params}")]
    NoDegreesOfFreedom { n: usize, params: usize },

    #[error("hat matrix saturated at observation {index} (h_ii = {leverage})")]
    Saturated { index: usize, leverage: f64 },

    #[error("local fit at z0 = {z0} is rank deficient")]
    LocalRank { z0: f64 },

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("degenerate fit: residual sum of squares {0} is not positive")]
    DegenerateFit(f64),

    #[error("models are not nested: {0}")]
    NotNested(String),

    #[error("bootstrap failed: {dropped} of {requested} replicates dropped")]
    BootstrapFailed { dropped: usize, requested: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl PlvcError {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            PlvcError::InvalidDomain { .. } => "invalid_domain",
            PlvcError::UnsupportedDegree(_) => "unsupported_degree",
            PlvcError::BasisTooSmall { .. } => "basis_too_small",
            PlvcError::OutOfDomain { .. } => "out_of_domain",
            PlvcError::Ingestion { .. } => "ingestion",
            PlvcError::Dimension(_) => "dimension",
            PlvcError::Collinear { .. } => "collinear",
            PlvcError::NoDegreesOfFreedom { .. } => "no_degrees_of_freedom",
            PlvcError::Saturated { .. } => "saturated",
            PlvcError::LocalRank { .. } => "local_rank",
            PlvcError::Selection(_) => "selection",
            PlvcError::DegenerateFit(_) => "degenerate_fit",
            PlvcError::NotNested(_) => "not_nested",
            PlvcError::BootstrapFailed { .. } => "bootstrap_failed",
            PlvcError::Config(_) => "config",
            PlvcError::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for PlvcError {
    fn from(e: std::io::Error) -> Self {
        PlvcError::Io(e.to_string())
    }
}
