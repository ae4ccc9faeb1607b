use thiserror::Error;

/// Errors raised by the construction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("lattice is not compatible with the sign-reflection group: {0}")]
    Symmetry(String),
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("node count mismatch: expected {expected}, got {got}")]
    NodeCountMismatch { expected: usize, got: usize },
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("value {value} outside tabulated range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("Green operator requires S > s0 (S = {s}, s0 = {s0})")]
    InjectivityDomain { s: f64, s0: f64 },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("boundary data norm {norm:.3e} exceeds ball radius {bound:.3e}")]
    InputSize { norm: f64, bound: f64 },
    #[error("iteration diverged: {0}")]
    Divergence(String),
    #[error("insufficient range: {0}")]
    InsufficientRange(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("tail too short: windowed fits disagree by {0:.3e}")]
    TailTooShort(f64),
    #[error("cross-section does not intersect the mesh at z = {0}")]
    NoCrossSection(f64),
    #[error("configuration errors: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error("empty surface")]
    EmptySurface,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence(_) | Error::Divergence(_) | Error::Singular(_) | Error::InputSize { .. } | Error::TailTooShort(_) => 3,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
