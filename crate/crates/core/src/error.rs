use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{} malformed row(s): {}", .0.len(), format_row_errors(.0))]
    Rows(Vec<RowError>),

    #[error("missing height for participant(s): {}", .0.join(", "))]
    MissingHeight(Vec<String>),

    #[error("stratum age={age} gender={gender} has zero total weight")]
    ZeroStratumWeight { age: u32, gender: String },

    #[error("empty cohort")]
    EmptyCohort,

    #[error("reference table: {0}")]
    Reference(String),

    #[error("reference table does not cover age={age} gender={gender}")]
    Coverage { age: u32, gender: String },

    #[error("positivity violation: no observed outcomes at age(s) {}", join_ages(.ages))]
    Positivity { ages: Vec<u32> },

    #[error("saturated model has no coefficient for age {age}; refusing to extrapolate")]
    Extrapolation { age: u32 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{failed} of {total} bootstrap replicates failed (limit 10%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Schema(_) => "schema",
            Error::Rows(_) => "row_parse",
            Error::MissingHeight(_) => "missing_height",
            Error::ZeroStratumWeight { .. } => "zero_stratum_weight",
            Error::EmptyCohort => "empty_cohort",
            Error::Reference(_) => "reference_table",
            Error::Coverage { .. } => "coverage",
            Error::Positivity { .. } => "positivity",
            Error::Extrapolation { .. } => "extrapolation",
            Error::Domain(_) => "domain",
            Error::TooManyFailures { .. } => "replicate_failures",
            Error::Config(_) => "config",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based line number in the source file, header included.
    pub line: u64,
    pub message: String,
}

fn format_row_errors(rows: &[RowError]) -> String {
    rows.iter()
        .take(10)
        .map(|r| format!("line {}: {}", r.line, r.message))
        .collect::<Vec<_>>()
        .join("; ")
}

fn join_ages(ages: &[u32]) -> String {
    ages.iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}
