use thiserror::Error;

use crate::symx::EvalError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} is out of domain: {reason}")]
    Domain { name: String, value: f64, reason: &'static str },
    #[error("evaluation failed in term {order}: {source}")]
    Term {
        order: usize,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("unsupported: {0}")]
    Capability(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(name: &str, value: f64, reason: &'static str) -> Error {
    Error::Domain { name: name.to_string(), value, reason }
}

/// Fails with a domain error unless `ok` holds.
pub(crate) fn require(ok: bool, name: &str, value: f64, reason: &'static str) -> Result<()> {
    if ok && !value.is_nan() {
        Ok(())
    } else {
        Err(domain(name, value, reason))
    }
}
