use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vertex index {index} out of range 1..={n_vertices}")]
    InvalidVertexIndex { index: usize, n_vertices: usize },
    #[error("graph is disconnected: vertex {vertex} is unreachable from vertex 1")]
    DisconnectedGraph { vertex: usize },
    #[error("edge list is empty")]
    EmptyEdgeList,
    #[error("graph needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("edge {edge} is a self-loop at vertex {vertex}")]
    SelfLoop { edge: usize, vertex: usize },
    #[error("coefficient on edge {edge} is not strictly positive at grid point {point}")]
    NonPositiveCoefficient { edge: usize, point: usize },
    #[error("grid needs n_x >= 3, got {0}")]
    InvalidGrid(usize),
    #[error("boundary coefficient b[{index}] = {value} must be <= 0")]
    PositiveBoundaryCoefficient { index: usize, value: f64 },
    #[error("no strictly negative boundary coefficient (set the conservative flag to allow b = 0)")]
    NoDissipativeNode,
    #[error("trace mismatch at vertex {vertex}: endpoint values differ by {gap:e}")]
    TraceMismatch { vertex: usize, gap: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("segment horizon {segment} does not match measure horizon {measure}")]
    HorizonMismatch { segment: f64, measure: f64 },
    #[error("delay atom at {theta} lies outside [-{r}, 0]")]
    AtomOutOfRange { theta: f64, r: f64 },
    #[error("time step {dt} is not an integer multiple of the delay spacing {spacing}")]
    StepNotMultipleOfDelayGrid { dt: f64, spacing: f64 },
    #[error("t0 must be positive, got {0}")]
    NonPositiveT0(f64),
    #[error("non-finite entries in {0}")]
    NonFiniteEntries(&'static str),
    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,
    #[error("blow-up detected at t = {t}: |entry| = {value:e}")]
    BlowupDetected { t: f64, value: f64 },
    #[error("control domain is empty (z_max = {0})")]
    EmptyControlDomain(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
