use alloc::string::String;

/// Errors raised anywhere in the numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point ({0}, {1}) lies outside the unit square")]
    OutsideDomain(f64, f64),
    #[error("cell (level {level}, {i}, {j}) is not active")]
    InactiveCell { level: usize, i: usize, j: usize },
    #[error("refinement budget exhausted: level {requested} exceeds the maximum of {max_levels} levels")]
    RefinementBudget { requested: usize, max_levels: usize },
    #[error("target space does not nest the source space")]
    NotNested,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is singular to working precision (pivot {pivot} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("parameterization failed: {0}")]
    Parameterization(String),
    #[error("design vector violates its box bounds at component {0}")]
    OutOfBox(usize),
    #[error("geometric template error: {0}")]
    Template(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("design evaluation failed: {0}")]
    Evaluation(String),
    #[error("optimizer: {0}")]
    Optimizer(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
