use thiserror::Error;

use crate::transport::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown coordinate `{name}` at byte {offset} (dimension is {dim})")]
    UnknownCoordinate {
        name: String,
        offset: usize,
        dim: usize,
    },

    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },

    #[error("domain error in `{subterm}`: {reason}")]
    Domain { subterm: String, reason: String },

    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite {
        point: Vec<f64>,
        min_eigenvalue: f64,
    },

    #[error("degenerate frame at {point:?}: {detail}")]
    DegenerateFrame { point: Vec<f64>, detail: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("connections evaluated at different points")]
    MismatchedPoints,

    #[error("trajectory left the domain at t = {t} (point {point:?})")]
    DomainExit {
        t: f64,
        point: Vec<f64>,
        partial: Box<Trajectory>,
    },

    #[error("non-finite integrator state at t = {t}")]
    NonFinite { t: f64 },

    #[error("parameter point {0:?} is outside the sampled region")]
    OffGrid(Vec<f64>),

    #[error("singular chart Jacobian at {0:?}")]
    SingularJacobian(Vec<f64>),

    #[error("config error at {location}: {message}")]
    ConfigParse { location: String, message: String },

    #[error("invalid config: {0}")]
    Validation(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
