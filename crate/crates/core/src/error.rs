use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),

    #[error("network has {n} nodes, above the dense capacity of {cap}")]
    Capacity { n: usize, cap: usize },

    /// `(I - beta G)` has a pivot below the singularity threshold.
    #[error("singular outcome system (beta = {beta}, pivot {pivot:e} at row {row})")]
    SingularSystem { beta: f64, row: usize, pivot: f64 },

    #[error("Neumann series diverges: |beta| * lambda_1 = {spectral_radius}")]
    Divergent { spectral_radius: f64 },

    #[error("Neumann series did not converge within {k_max} terms")]
    NonConvergence { k_max: usize },

    /// Rank deficiency in a regressor set; names the first dependent column.
    #[error("collinear regressors: column `{column}` is linearly dependent on earlier columns")]
    Collinear { column: String },

    /// The friends-of-friends operator carries no variation (G2 = 0 or G2 X = 0).
    #[error("degenerate instrument: {0}")]
    DegenerateInstrument(String),

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("correlation undefined: zero variance in {0}")]
    UndefinedCorrelation(&'static str),

    #[error("eigenvalue {index} puts beta * lambda within 1e-10 of one")]
    SingularBoundary { index: usize, eigenvalue: f64 },

    #[error("requested variance estimate `{0}` is not available on this fit")]
    MissingVariance(&'static str),

    #[error("internal error: {0}")]
    Internal(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
