use thiserror::Error;

pub type Result<T, E = HaarError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HaarError {
    #[error("atom `{0}` has non-positive measure")]
    NonPositiveMeasure(String),
    #[error("atom `{atom}` has measure {declared} but its children sum to {children}")]
    MassMismatch {
        atom: String,
        declared: String,
        children: String,
    },
    #[error("atom structure is cyclic or disconnected (atom `{0}` is unreachable from a root)")]
    CyclicStructure(String),
    #[error("unknown atom `{0}`")]
    UnknownAtom(String),
    #[error("duplicate atom id `{0}`")]
    DuplicateAtom(String),
    #[error("atom `{0}` has no measure and no children to derive it from")]
    MissingMeasure(String),
    #[error("tree has no atoms")]
    EmptyTree,
    #[error("atom `{0}` has zero mass for the requested measure")]
    ZeroMass(String),
    #[error("generation range {m}..={n} is outside 1..={max}")]
    GenerationOutOfRange { m: usize, n: usize, max: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("size function not supported here: {0}")]
    UnsupportedSize(String),
    #[error("sampler produced no admissible pairs for region {0}")]
    SamplerEmpty(String),
    #[error("degenerate measure: {0}")]
    DegenerateMeasure(String),
    #[error("epsilon {0} is outside (0, 1/2)")]
    EpsilonOutOfRange(String),
    #[error("point ({x}, {y}) is outside the positive quadrant")]
    DomainError { x: f64, y: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for HaarError {
    fn from(e: serde_json::Error) -> Self {
        HaarError::Parse(e.to_string())
    }
}
