use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {0:?} lies outside the chart domain")]
    OutOfChart(Vec<f64>),
    #[error("finite-difference stencil around {0:?} leaves the chart domain")]
    StencilOutOfChart(Vec<f64>),
    #[error("point {coords:?} lies outside U_k (k^2 + <Y,Y> = {margin:e})")]
    OutsideUk { coords: Vec<f64>, margin: f64 },
    #[error("degenerate Killing field: <Y,Y> = {0:e}")]
    DegenerateKilling(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unknown model '{0}'")]
    UnknownModel(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("grid too coarse: {0} intervals (need at least 4)")]
    GridTooCoarse(usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("malformed curve: {0}")]
    MalformedCurve(String),

    #[error("integrator step failure at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },
    #[error("curve is not horizontal: max |<w',Y>| = {0:e}")]
    NotHorizontal(f64),
    #[error("constraint violated: {0}")]
    ConstraintViolated(String),
    #[error("Killing flow left the chart from {0:?}")]
    FlowEscape(Vec<f64>),

    #[error("curve is not a critical point: {0}")]
    NotCritical(String),
    #[error("curve is not a geodesic: residual {0:e}")]
    NotGeodesic(f64),
    #[error("vector is not tangent to the observer worldline (residual {0:e})")]
    NotTangentToGamma(f64),
    #[error("vector is not normal to Y (residual {0:e})")]
    NotNormal(f64),
    #[error("endpoint is focal: {0} null directions in the Hessian")]
    FocalEndpoint(usize),

    #[error("initial condition violated: residual {0:e}")]
    InitialConditionViolated(f64),
    #[error("geodesic does not start orthogonally to Y: g_R(w'(0),Y) = {0:e}")]
    NotOrthogonalStart(f64),
    #[error("parallel frame degenerate: smallest singular value {0:e}")]
    FrameDegenerate(f64),

    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("seed direction has no horizontal part")]
    ZeroSeed,
    #[error("discrete minimisation stalled after {0} iterations")]
    Stalled(usize),

    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
