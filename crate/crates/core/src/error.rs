use thiserror::Error;

/// Errors raised by the workbench.
#[derive(Debug, Error)]
pub enum CiwError {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input is not mean-free: |mean| = {mean:.3e} exceeds {limit:.3e}")]
    NotMeanFree { mean: f64, limit: f64 },

    #[error("matrix outside the positivity ball: |S - Id|_F = {distance:.6e} > eps_u = {radius:.6e}")]
    OutsideBall { distance: f64, radius: f64 },

    #[error("degenerate direction set: {0}")]
    Degenerate(String),

    #[error("unresolvable frequency: {what} needs n >= {required_n} (grid has n = {n})")]
    Unresolvable { what: String, required_n: usize, n: usize },

    #[error("ledger rejected: {0}")]
    Ledger(String),

    #[error("continuity violated: residual {residual:.3e} exceeds {tolerance:.3e}")]
    Continuity { residual: f64, tolerance: f64 },

    #[error("identity `{identity}` failed: {value:.3e} > {tolerance:.3e}")]
    Assertion { identity: String, value: f64, tolerance: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, CiwError>;

impl From<serde_json::Error> for CiwError {
    fn from(err: serde_json::Error) -> Self {
        CiwError::Serialize(err.to_string())
    }
}

impl From<csv::Error> for CiwError {
    fn from(err: csv::Error) -> Self {
        if err.is_io_error() {
            match err.into_kind() {
                csv::ErrorKind::Io(io) => CiwError::Io(io),
                other => CiwError::Serialize(format!("{other:?}")),
            }
        } else {
            CiwError::Serialize(err.to_string())
        }
    }
}
