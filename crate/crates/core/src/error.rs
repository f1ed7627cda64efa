use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("pixel ({row}, {col}): {source}")]
    Pixel {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    /// True for failures caused by the numbers rather than by shapes or arguments.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Input(_) | Error::Solver(_) | Error::Generation(_) => true,
            Error::UndefinedMetric(_) => true,
            Error::InsufficientData(_) => true,
            Error::Pixel { source, .. } => source.is_numerical(),
            Error::Dimension(_) | Error::Parameter(_) => false,
        }
    }
}
