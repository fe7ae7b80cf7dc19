use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph has no sites")]
    EmptyGraph,
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("vertex {vertex} out of range for {n_sites} sites")]
    VertexOutOfRange { vertex: usize, n_sites: usize },
    #[error("invalid graph descriptor `{0}`")]
    BadDescriptor(String),
    #[error("hopping rate must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("empty sector: N = {total} exceeds {n_sites} sites x cutoff {cutoff}")]
    EmptySector {
        total: usize,
        n_sites: usize,
        cutoff: usize,
    },
    #[error("invalid cutoff {0}: must be at least 1")]
    BadCutoff(usize),
    #[error("sector dimension {0} exceeds supported maximum {1}")]
    SectorTooLarge(usize, usize),
    #[error("sector mismatch: {0}")]
    SectorMismatch(String),
    #[error("on-site term at site {site} is not diagonal in the occupation basis")]
    NonDiagonalOnsite { site: usize },
    #[error("on-site term at site {site} has {got} rows, expected {expected}")]
    OnsiteShape {
        site: usize,
        got: usize,
        expected: usize,
    },
    #[error("eigensolver did not converge (residual {0:e})")]
    EigenFailure(f64),
    #[error("inverse temperature must be positive, got {0}")]
    BadBeta(f64),
    #[error("weight floor must lie in (0, 1e-6], got {0}")]
    BadWeightFloor(f64),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("site probabilities must be nonnegative, match the region, and sum to 1")]
    BadSiteProbabilities,
    #[error("channel region is empty")]
    EmptyRegion,
    #[error("missing sector N = {0}")]
    MissingSector(usize),
    #[error("time grid must start at 0 and increase strictly")]
    BadTimeGrid,
    #[error("time grid must be uniform with at least {0} points")]
    NonUniformGrid(usize),
    #[error("krylov propagation failed to reach tolerance {tol:e} at step {step} (t = {time})")]
    KrylovFailure { step: usize, time: f64, tol: f64 },
    #[error("internal consistency failure: {0}")]
    Consistency(String),
    #[error("initial vector has a negative entry {value} at site {site}")]
    NegativeInitial { site: usize, value: f64 },
    #[error("grid mismatch between trajectory and comparison solution")]
    GridMismatch,
    #[error("operator dimension {0} exceeds the dense cap {1}")]
    DimensionCap(usize, usize),
    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
