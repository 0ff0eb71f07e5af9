use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing required table `{0}`")]
    MissingTable(&'static str),

    #[error("invalid case data: {0}")]
    InvalidCase(String),

    #[error("unsupported cost model (type {0}); only polynomial gencost rows are supported")]
    UnsupportedCostModel(u32),

    #[error("unknown {kind} index {index} (case has {count})")]
    UnknownElement {
        kind: &'static str,
        index: usize,
        count: usize,
    },

    #[error("scenario {0} is islanded: the in-service branch graph does not span all buses")]
    Islanded(String),

    #[error("argument outside the open interval (-1, 1): {0}")]
    Domain(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular linear system")]
    Singular,

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e})")]
    NoConvergence { iterations: usize, mismatch: f64 },

    #[error("PV/PQ switching did not settle after {0} rounds")]
    SwitchingCycle(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error stems from bad input rather than a numerical
    /// failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::Singular | Error::NoConvergence { .. } | Error::SwitchingCycle(_) | Error::Solver(_)
        )
    }
}
