use thiserror::Error;

/// Errors raised by mesh construction, assembly, solvers and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh levels: coarse {coarse}, fine {fine}")]
    InvalidLevels { coarse: u32, fine: u32 },

    #[error("hole not representable on the level-{level} grid: {reason}")]
    UnrepresentableHole { level: u32, reason: String },

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("value prescribed for node {0}, which is not a Dirichlet node")]
    NotDirichletNode(usize),

    #[error("operator is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("iteration cap of {iterations} reached, best relative residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("singular corrector saddle system on patch of coarse element {element}: {reason}")]
    SingularPatch { element: usize, reason: String },

    #[error("missing corrector for coarse node {0}")]
    MissingCorrector(usize),

    #[error("decay profile has only {0} usable radii (need at least 3)")]
    TooFewRadii(usize),

    #[error("cache: {0}")]
    Cache(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
