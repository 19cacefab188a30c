use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("root finder failed for R = {inner_radius}, gamma = {gamma}: {reason}")]
    RootFinder {
        inner_radius: f64,
        gamma: f64,
        reason: &'static str,
    },

    #[error("logarithmic singularity at the origin")]
    Singularity,

    #[error("inverted element {triangle} (signed area {area:e})")]
    InvertedElement { triangle: usize, area: f64 },

    #[error("Newton did not converge in {iterations} iterations (|r|_inf = {residual:e})")]
    NewtonNonconvergence { iterations: usize, residual: f64 },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("mesh generation failed: {0}")]
    Mesher(String),

    #[error("node budget exceeded: {requested} nodes requested, cap is {cap}")]
    NodeBudget { requested: usize, cap: usize },

    #[error("degenerate boundary: {0}")]
    DegenerateBoundary(String),

    #[error("boundary is not star-like with respect to ({0}, {1})")]
    NotStarLike(f64, f64),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
