use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("composition needs an inner series with zero constant term, got {constant}")]
    CompositionDomain { constant: f64 },

    #[error("pole of the gamma function: {0}")]
    Pole(String),

    #[error("moment of order {order} diverges for index n = {n}")]
    DivergentMoment { order: u32, n: u64 },

    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),

    #[error("negative polynomial value Theta_{index}(y) = {value:e} at y = {point}")]
    PositivityViolation { index: usize, point: f64, value: f64 },

    #[error("weight truncation did not reach tail {eps:e} within {cap} terms (tail {tail:e})")]
    TruncationFailure { eps: f64, cap: usize, tail: f64 },

    #[error("degenerate normalizer S(1)*xi(p(x)) = {0:e}")]
    DegenerateNormalizer(f64),

    #[error("system is not admissible: {0}")]
    Inadmissible(String),

    #[error("limit extrapolation did not converge: {0}")]
    LimitEstimate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown test function `{0}`")]
    UnknownFunction(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("evaluation failed at n = {n}, x = {x}: {source}")]
    AtPoint {
        n: u64,
        x: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, n: u64, x: f64) -> Self {
        Error::AtPoint {
            n,
            x,
            source: Box::new(self),
        }
    }
}
