//! Crate-wide error type.

/// Errors surfaced by the library and the CLI.
///
/// The CLI maps these onto exit codes: invalid inputs and config problems
/// exit with 2, numerical failures (calibration, eigensolvers) with 3, and
/// I/O problems with 4.
#[derive(Debug, thiserror::Error)]
pub enum TrfError {
    /// Input rejected before any computation started.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tabular parse failure; `row` is the 0-based data row when known.
    #[error("parse error{}: {message}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Parse {
        row: Option<usize>,
        message: String,
    },

    /// The requested operation is not defined for this input variant.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A pointwise activation returned a non-finite value during quadrature.
    #[error("non-finite activation value at quadrature node {node} (x = {x})")]
    Eval { node: usize, x: f64 },

    /// Threshold calibration failed to reach the residual tolerance.
    #[error("threshold calibration failed: best residual {best_residual:.3e} over search box [-{search_box}, {search_box}]")]
    Calibration {
        best_residual: f64,
        search_box: f64,
    },

    /// Shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A sample degenerate for the requested kernel (e.g. zero norm).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Matrix expected to be symmetric is not, beyond tolerance.
    #[error("matrix not symmetric: max asymmetry {0:.3e}")]
    NotSymmetric(f64),

    /// Generic numerical failure (factorization, non-convergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Allocation request too large for this machine.
    #[error("allocation of {bytes} bytes refused: {context}")]
    Alloc { bytes: usize, context: String },

    /// Configuration file problem; `path` is the JSON path when known.
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TrfError>;

impl TrfError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        TrfError::InvalidInput(msg.into())
    }

    pub fn dims(msg: impl Into<String>) -> Self {
        TrfError::DimensionMismatch(msg.into())
    }

    /// Exit code used by the `trf` binary for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            TrfError::InvalidInput(_)
            | TrfError::Parse { .. }
            | TrfError::Unsupported(_)
            | TrfError::DimensionMismatch(_)
            | TrfError::Degenerate(_)
            | TrfError::Config { .. } => 2,
            TrfError::Eval { .. }
            | TrfError::Calibration { .. }
            | TrfError::NotSymmetric(_)
            | TrfError::Numerical(_)
            | TrfError::Alloc { .. } => 3,
            TrfError::Io(_) => 4,
        }
    }
}
