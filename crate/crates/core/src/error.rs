use thiserror::Error;

/// Errors produced by network parsing, tree construction and planning.
#[derive(Debug, Error)]
pub enum TnError {
    #[error("empty network")]
    EmptyNetwork,
    #[error("duplicate index id `{0}`")]
    DuplicateIndex(String),
    #[error("index `{0}` has {1} endpoints (hyperedges and dangling-free edges are rejected)")]
    BadEndpointCount(String, usize),
    #[error("unknown index `{0}` referenced by vertex {1}")]
    UnknownIndex(String, usize),
    #[error("unknown index `{0}`")]
    NoSuchIndex(String),
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(usize),
    #[error("edge `{0}` has log2 weight {1}; log2 weights must be >= 1")]
    BadWeight(String, u64),
    #[error("unsupported format tag `{0}` (expected `{1}`)")]
    BadFormat(String, String),
    #[error("malformed document: {0}")]
    Parse(String),
    #[error("path step {step}: vertex {vertex} is unknown or already consumed")]
    BadPathVertex { step: usize, vertex: usize },
    #[error("path has {got} steps, expected {want}")]
    BadPathLength { got: usize, want: usize },
    #[error("path leaves {0} unmerged components")]
    UnmergedComponents(usize),
    #[error("network is disconnected")]
    Disconnected,
    #[error("lifetime of index `{0}` is not a simple tree path")]
    LinearityViolation(String),
    #[error("index `{0}` has non-contiguous membership on the stem")]
    NonContiguousInterval(String),
    #[error("index `{0}` has log2 weight != 1 and cannot be sliced")]
    NonUnitWeight(String),
    #[error("target rank {0} cannot be satisfied")]
    TargetInfeasible(u64),
    #[error("candidate index pool exhausted before the memory target was met")]
    PoolExhausted,
    #[error("candidate pool has {got} indices, exceeding the limit of {limit}")]
    PoolTooLarge { got: usize, limit: usize },
    #[error("stem step {step}: tensor of rank {rank} cannot fit in scratchpad capacity {capacity} even with maximal slicing")]
    StepCannotFit { step: usize, rank: u64, capacity: u64 },
    #[error("resident tensor rank {rank} exceeds scratchpad capacity {capacity} at step {step}")]
    CapacityExceeded { step: usize, rank: u64, capacity: u64 },
    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("slice set violates the memory constraint: tensor `{tensor}` has residual rank {residual} > target {target}")]
    ConstraintViolated { tensor: usize, residual: u64, target: u64 },
    #[error("predicted cost 2^{predicted_log2:.2} flops exceeds the execution guard 2^{limit_log2:.2}; raise the limit to force")]
    GuardTripped { predicted_log2: f64, limit_log2: f64 },
    #[error("empty candidate list")]
    EmptyCandidates,
    #[error("invalid annealing config: {0}")]
    BadConfig(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, TnError>;
