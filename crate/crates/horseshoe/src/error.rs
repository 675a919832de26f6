use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("orbit escapes {direction} at step {step}")]
    OrbitEscapes { direction: &'static str, step: usize },
    #[error("point is not in the region required by {0}")]
    Precondition(&'static str),
    #[error("point lies on the tangency orbit")]
    TangencyOrbit,
    #[error("point is outside the domain of the induced map")]
    OutOfDomain,
    #[error("no return to the region A within {0} steps")]
    NoReturn(usize),
    #[error("orbit construction failed: {0}")]
    Builder(String),
    #[error("graph transform: {0}")]
    GraphTransform(String),
    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("no intersection between the leaves")]
    NoIntersection,
    #[error("leaves intersect in more than one point")]
    NonUnique,
    #[error("empty atom for word {0}")]
    EmptyAtom(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("search failed: {0}")]
    SearchFailed(String),
    #[error("point is outside every symbol band")]
    NotInBands,
    #[error("orbit leaves the bands at step {0}")]
    Escaped(isize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
