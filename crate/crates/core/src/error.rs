use thiserror::Error;

/// Every failure a numerical routine in this crate can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PksError {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain too small: {0}")]
    DomainTooSmall(String),
    #[error("outside validated range: {0}")]
    OutOfValidatedRange(String),
    #[error("step rejected: dt = {dt:e} exceeds the CFL limit {limit:e}")]
    StepRejected { dt: f64, limit: f64 },
    #[error("blow-up detected at t = {t} (sup norm {sup_norm:e})")]
    BlowupDetected { t: f64, sup_norm: f64 },
    #[error("step size collapsed: {0}")]
    StiffnessFailure(String),
    #[error("insufficient sampling: {0}")]
    InsufficientSampling(String),
    #[error("mass {0} is at or above the critical mass 8*pi")]
    SupercriticalMass(f64),
    #[error("fixed point stalled after {iterations} iterations (last update {last_update:e})")]
    FixedPointStalled { iterations: usize, last_update: f64 },
    #[error("quadrature diverging: {0}")]
    QuadratureDiverging(String),
    #[error("missing dependency: {0}")]
    DependencyMissing(String),
    #[error("no expansion in two dimensions; the attractor is the self-similar profile")]
    UseProfileModule,
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("divergent moment: {0}")]
    DivergentMoment(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("trajectory ended in blow-up at t = {0}")]
    BlowupTrajectory(f64),
}

pub type Result<T> = std::result::Result<T, PksError>;
