use thiserror::Error;

/// Errors produced by model construction, solvers and certificate checks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("discount factor must lie in (0,1), got {0}")]
    InvalidBeta(f64),

    #[error("invalid model specification: {0}")]
    Spec(String),

    #[error("pair (x, u) violates the joint constraint set: x = {x:?}, u = {u:?}")]
    ConstraintViolation { x: Vec<f64>, u: Vec<f64> },

    #[error("image f(x, u) = {image:?} falls outside the state box (x = {x:?}, u = {u:?})")]
    ImageOutOfDomain {
        x: Vec<f64>,
        u: Vec<f64>,
        image: Vec<f64>,
    },

    #[error("equilibrium residual {residual:e} exceeds tolerance {tol:e}")]
    EquilibriumResidual { residual: f64, tol: f64 },

    #[error("grid node {index} at {coords:?} has no admissible control")]
    InfeasibleNode { index: usize, coords: Vec<f64> },

    #[error("value iteration did not converge after {iterations} iterations (last residual bound {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("enumeration budget exceeded: {required:e} sequences requested, limit {limit:e}")]
    BudgetExceeded { required: f64, limit: f64 },

    #[error("no admissible control sequence on the control grid from {x0:?}")]
    NoAdmissibleSequence { x0: Vec<f64> },

    #[error("control sequence becomes inadmissible at step {step}")]
    InadmissibleAt { step: usize },

    #[error("trajectory has {len} states but {required} are required")]
    TrajectoryTooShort { len: usize, required: usize },

    #[error("point {point:?} lies outside the grid domain")]
    OutOfGrid { point: Vec<f64> },

    #[error("linear storage synthesis failed: least-squares residual {residual:e} exceeds tolerance {tol:e}")]
    StorageSynthesisFailed { residual: f64, tol: f64 },

    #[error(
        "sample value {value} at deviation {deviation} is negative; cost is not positive definite"
    )]
    NotPositiveDefinite { deviation: f64, value: f64 },

    #[error("comparison-function fit is degenerate: {0}")]
    DegenerateFit(String),

    #[error("continuity probe failed for every ladder candidate down to rho/2^10 (rho = {rho})")]
    ContinuityProbeFailed { rho: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("region error: {0}")]
    Region(String),

    #[error("value {0} is outside the invertible range of the comparison function")]
    Range(f64),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV parse error at line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
