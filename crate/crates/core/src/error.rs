use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    /// Grid parameters violate `a < b`, `n >= 16`.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A potential evaluated to a non-finite value.
    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    /// A density is negative, non-finite or has no mass.
    #[error("invalid density: {0}")]
    InvalidDensity(String),

    /// Two objects live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A sampled profile is not convex; the three radii witness the violation.
    #[error("convexity violation at r = ({0}, {1}, {2})")]
    ConvexityViolation(f64, f64, f64),

    /// The conjugate gradient vanishes away from the origin.
    #[error("degenerate cost: (h*)'(|z|) = 0 at z = {0}")]
    DegenerateCost(f64),

    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Kantorovich potentials failed the duality-gap certificate.
    #[error("dual infeasibility: duality gap {gap:.3e} exceeds tolerance {tol:.3e}")]
    DualInfeasible { gap: f64, tol: f64 },

    /// The one-step JKO solver did not reach the requested residual.
    #[error("JKO solver failed after {iterations} iterations (residual {residual:.3e})")]
    SolverFailure { residual: f64, iterations: usize },

    /// A flow step failed.
    #[error("flow failed at step {step}: {source}")]
    FlowStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// Malformed or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
