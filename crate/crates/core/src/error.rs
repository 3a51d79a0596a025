use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular operand {value:e} in `{term}`")]
    SingularOperand { term: String, value: f64 },

    #[error("simulation diverged at t = {time}")]
    Diverged { time: f64 },

    #[error("series too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("filter cutoff {0} outside (0, 1)")]
    CutoffOutOfRange(f64),

    #[error("delay index {tau_index} leaves {rows} rows for {columns} candidates")]
    DelayTooLarge {
        tau_index: usize,
        rows: usize,
        columns: usize,
    },

    #[error("trajectory has no derivative estimates")]
    MissingDerivatives,

    #[error("invalid trajectory: {0}")]
    InvalidData(String),

    #[error("invalid term `{input}` at column {position}: {message}")]
    TermParse {
        input: String,
        position: usize,
        message: String,
    },

    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("search window ({start}, {end}) is too small")]
    WindowTooSmall { start: usize, end: usize },

    #[error("search window start {start} is below the minimum {min}")]
    WindowTouchesZero { start: usize, min: usize },

    #[error("Cholesky factorization failed for a {rank}x{rank} system")]
    CholeskyFailure { rank: usize },

    #[error("{} highly correlated candidate pair(s); resolve via `discover.drop` or `discover.auto_drop`: {}", .0.len(), describe_pairs(.0))]
    CorrelatedCandidates(Vec<crate::basis::CorrelatedPair>),

    #[error("all {draws} posterior draws diverged")]
    AllDrawsDiverged { draws: usize },

    #[error("sampler failed at iteration {iteration}: {source}")]
    Sampler {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn describe_pairs(pairs: &[crate::basis::CorrelatedPair]) -> String {
    pairs
        .iter()
        .map(|p| format!("({}, {}: {:.4})", p.first_name, p.second_name, p.correlation))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CorrelatedCandidates(_) => 3,
            Error::Config(_)
            | Error::TermParse { .. }
            | Error::InvalidCatalog(_)
            | Error::InvalidModel(_)
            | Error::InvalidData(_)
            | Error::Io { .. }
            | Error::Csv(_)
            | Error::Json(_)
            | Error::CutoffOutOfRange(_)
            | Error::WindowTooSmall { .. }
            | Error::WindowTouchesZero { .. }
            | Error::MissingDerivatives
            | Error::TooShort { .. }
            | Error::DelayTooLarge { .. } => 2,
            Error::Sampler { source, .. } => source.exit_code().max(4),
            _ => 4,
        }
    }
}
