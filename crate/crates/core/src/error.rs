use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
  #[error("invalid parameter `{name}`: {reason}")]
  InvalidParameter { name: &'static str, reason: String },
  #[error("quadrature did not converge: {0}")]
  Quadrature(String),
  #[error("start point is outside the cone")]
  StartOutsideCone,
  #[error("{0}")]
  Unsupported(String),
  #[error("survival rate {rate:.3e} below the cost guard {guard:.1e} after {paths} paths")]
  CostGuard { rate: f64, guard: f64, paths: u64 },
  #[error("fixed-point iteration failed: {0}")]
  NoConvergence(String),
  #[error("point {x} lies outside the grid range [{lo}, {hi}]")]
  OutOfRange { x: f64, lo: f64, hi: f64 },
  #[error("linear algebra failure: {0}")]
  Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
  Error::InvalidParameter { name, reason: reason.into() }
}
