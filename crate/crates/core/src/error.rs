use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("label {0} not found in tree")]
    NotFound(String),
    #[error("duplicate key {0} in i.i.d. sample")]
    DuplicateKey(f64),
    #[error("{what} = {value} outside allowed range {range}")]
    OutOfRange {
        what: &'static str,
        value: String,
        range: &'static str,
    },
    #[error("linear system is singular")]
    Singular,
    #[error("quadrature did not converge: estimate {estimate}, error {error}")]
    Quadrature { estimate: f64, error: f64 },
    #[error("iteration cap {cap} reached with error bound {bound}")]
    CapReached { cap: usize, bound: f64 },
    #[error("experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn out_of_range<T: std::fmt::Display>(
    what: &'static str,
    value: T,
    range: &'static str,
) -> Error {
    Error::OutOfRange {
        what,
        value: value.to_string(),
        range,
    }
}
