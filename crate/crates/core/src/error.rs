use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cost is singular: 1 - x.y = {gap:e} is below the guard")]
    Domain { gap: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate element {element}: {reason}")]
    Assembly { element: usize, reason: String },
    #[error("conjugate gradient stopped after {iterations} iterations with relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("node {0} is not a boundary node")]
    NotBoundary(usize),
    #[error("total mass {0:e} is not positive")]
    ZeroMass(f64),
    #[error("rejection sampling stalled with acceptance rate {0:e}")]
    RejectionStall(f64),
    #[error("image has empty support")]
    EmptySupport,
    #[error("image format: {0}")]
    ImageFormat(String),
    #[error("normalization factor theta = {0:e} is not positive")]
    NonpositiveTheta(f64),
    #[error("point ({0:.6}, {1:.6}, {2:.6}) is not covered by the mesh")]
    PointLocation(f64, f64, f64),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(self, iteration: usize) -> Error {
        match self {
            e @ Error::AtIteration { .. } => e,
            e => Error::AtIteration {
                iteration,
                source: Box::new(e),
            },
        }
    }
}
