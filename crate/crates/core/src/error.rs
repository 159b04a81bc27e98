use thiserror::Error;

/// Errors raised by the library. Variants are grouped by the subsystem that
/// raises them; the CLI maps configuration and data variants onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    // vectors and retrieval
    #[error("zero vector cannot be normalized (norm {norm:e})")]
    ZeroVector { norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("negative age {0}")]
    NegativeAge(f64),
    #[error("memory store is empty")]
    EmptyStore,
    #[error("invalid memory store: {0}")]
    InvalidStore(String),

    // numerics and geometry
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate covariance: all eigenvalues below 1e-12")]
    DegenerateCovariance,
    #[error("duplicate points: zero nearest-neighbour distance at row {row}")]
    DuplicatePoints { row: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("insufficient events: {found} gaps, need at least {needed}")]
    InsufficientEvents { found: usize, needed: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("quadrature failed to reach tolerance (estimate {estimate:e}, error {error:e})")]
    QuadratureFailure { estimate: f64, error: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    // fitting and inference
    #[error("too few points: {found}, need at least {needed}")]
    TooFewPoints { found: usize, needed: usize },
    #[error("nonpositive input at index {index}: {value}")]
    NonpositiveInput { index: usize, value: f64 },
    #[error("retention out of range at index {index}: {value}")]
    RetentionOutOfRange { index: usize, value: f64 },
    #[error("no transition: response range {range} below 0.2")]
    NoTransition { range: f64 },
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    // experiments and solutions
    #[error("competitor pool too small: have {available}, need {needed}")]
    PoolTooSmall { available: usize, needed: usize },
    #[error("store too small: {found} items, need at least {needed}")]
    StoreTooSmall { found: usize, needed: usize },
    #[error("cannot shrink from {from} to {to} dimensions by padding")]
    ShrinkRequest { from: usize, to: usize },
    #[error("rank deficient: requested {requested} components, rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("cannot orthogonalize {n} vectors in {d} dimensions")]
    TooManyVectors { n: usize, d: usize },
    #[error("near linear dependence at row {row} (residual norm {residual:e})")]
    NearDependence { row: usize, residual: f64 },

    // io
    #[error("bad magic at byte offset {offset}: expected IFLB1")]
    BadMagic { offset: u64 },
    #[error("unsupported encoding {code} at byte offset {offset}")]
    UnsupportedEncoding { code: u32, offset: u64 },
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: u64, actual: u64 },
    #[error("non-finite value at byte offset {offset}")]
    NonFiniteValue { offset: u64 },
    #[error("missing label {word:?} in list {list:?}")]
    MissingLabel { word: String, list: String },
    #[error("malformed data file: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
