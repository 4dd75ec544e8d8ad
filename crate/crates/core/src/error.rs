use thiserror::Error;

/// Partial residual diagnostics returned alongside a degenerate-denominator error.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialDiagnostics {
    pub v_eps_hat: f64,
    pub rho_hat: Option<f64>,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("grid alignment error: {0}")]
    Alignment(String),

    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("deflation window error: {0}")]
    Window(String),

    #[error("degenerate regressor: {0}")]
    DegenerateRegressor(String),

    #[error("degenerate residual diagnostics: {message}")]
    DiagnosticsDegenerate {
        message: String,
        partial: PartialDiagnostics,
    },

    #[error("degenerate residuals: {0}")]
    DegenerateResidual(String),

    #[error("regression error: {0}")]
    Regression(String),

    #[error("long-run variance error: {0}")]
    LongRunVariance(String),

    #[error("critical value table error: {0}")]
    Table(String),

    #[error("invalid model setup: {0}")]
    Spec(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the input data rather than by configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Data(_)
                | Error::EmptyInput(_)
                | Error::Coverage(_)
                | Error::Alignment(_)
                | Error::DegenerateScale(_)
                | Error::DegenerateRegressor(_)
                | Error::DiagnosticsDegenerate { .. }
                | Error::DegenerateResidual(_)
                | Error::Regression(_)
                | Error::LongRunVariance(_)
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
