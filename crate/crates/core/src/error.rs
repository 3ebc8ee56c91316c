use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("could not place {wanted} UAVs at least {d_min} m apart (placed {placed})")]
    Placement { wanted: usize, placed: usize, d_min: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("zero distance between transmitter and receiver")]
    Singularity,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("solver capability missing: {0}")]
    Capability(String),

    #[error("malformed cone program: {0}")]
    MalformedProgram(String),

    #[error("invalid linearization point: {0}")]
    LinearizationPoint(String),

    #[error("cooperation assignment infeasible: {0}")]
    Assignment(String),

    #[error("initial point violates {constraint} by {violation:.3e}")]
    Initialization { constraint: String, violation: f64 },

    #[error("problem infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("matrix is not rank one (lambda2/lambda1 = {ratio:.3e})")]
    RankOne { ratio: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
