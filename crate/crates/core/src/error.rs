//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A scalar parameter is outside its admissible domain.
    #[error("parameter `{name}` = {value} outside domain {domain}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    /// Load alpha = P/N must stay in (0, 1].
    #[error("load domain violated: P = {p} patterns for N = {n} neurons (alpha must be in (0,1])")]
    LoadDomain { p: usize, n: usize },

    /// Matrix / vector dimensions do not match the requested operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The symmetric eigensolver did not converge.
    #[error("eigensolver failed on a {n}x{n} matrix (frobenius norm {norm:.3e}){dump}")]
    Eigensolver { n: usize, norm: f64, dump: String },

    /// Adaptive quadrature did not reach the requested relative tolerance.
    #[error(
        "quadrature did not converge: last estimate {estimate:.12e}, \
         relative change {rel_change:.3e} after {nodes} nodes"
    )]
    QuadratureNoConverge {
        estimate: f64,
        rel_change: f64,
        nodes: usize,
    },

    /// The integrand returned a non-finite value at an interior node.
    #[error("non-finite integrand at lambda = {lambda:.12e} (node {node} of {nodes})")]
    NonFiniteIntegrand {
        lambda: f64,
        node: usize,
        nodes: usize,
    },

    /// The bulk density pole lies inside the integration support.
    #[error(
        "density pole at delta = {delta:.6e} not below the lower bulk edge {lambda_minus:.6e}"
    )]
    PoleInsideSupport { delta: f64, lambda_minus: f64 },

    /// Dump/sidecar decoding failed.
    #[error("dump format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("sidecar JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
