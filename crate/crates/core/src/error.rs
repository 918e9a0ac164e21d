use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum DmlError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    Shape {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value {value} in column `{column}` at row {row}")]
    NonFinite {
        column: String,
        row: usize,
        value: f64,
    },

    #[error("dataset role error: {0}")]
    Role(String),

    #[error("row index {index} out of range for dataset with {n_rows} rows")]
    RowOutOfRange { index: usize, n_rows: usize },

    #[error("singular design matrix (condition number estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("basis dimension {basis} is not smaller than the number of rows {rows}")]
    Dimensionality { basis: usize, rows: usize },

    #[error("degenerate treatment residuals ({scope}): variance {variance:.3e} < 1e-12")]
    DegenerateTreatment { scope: String, variance: f64 },

    #[error("treatment arm {arm} is empty in the training split of fold {fold}")]
    ArmSupport { fold: usize, arm: u8 },

    #[error("treatment column must be binary (0/1); found {value} at row {row}")]
    NonBinaryTreatment { row: usize, value: f64 },

    #[error("all {n} rows were trimmed at threshold {threshold}")]
    AllTrimmed { n: usize, threshold: f64 },

    #[error("weak instrument: |sum(vz*vw)|/n = {denominator:.3e}, first-stage F = {first_stage_f:.3}")]
    WeakInstrument { denominator: f64, first_stage_f: f64 },

    #[error("repetition {index} failed: {source}")]
    Repetition {
        index: usize,
        #[source]
        source: Box<DmlError>,
    },

    #[error("domain error in column `{column}` at row {row}: cannot take log of {value}")]
    Domain {
        column: String,
        row: usize,
        value: f64,
    },

    #[error("ingestion error at line {line}: {message}")]
    Ingestion { line: usize, message: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DmlError {
    pub fn config(msg: impl Into<String>) -> Self {
        DmlError::InvalidConfig(msg.into())
    }

    /// True for errors caused by the file system rather than by the data or configuration.
    pub fn is_io(&self) -> bool {
        match self {
            DmlError::Io(_) => true,
            DmlError::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, DmlError>;
