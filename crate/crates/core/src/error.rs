use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Structural problems: bad dimensions, empty grids, parameters outside
    /// their admissible ranges.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Mismatched grids or dimensions between two objects that must agree.
    #[error("incompatible operands: {0}")]
    Incompatible(String),

    /// The damping coefficient was evaluated to a non-positive value; the
    /// relaxation dynamics `q' = b/alpha` are undefined there.
    #[error("non-positive damping alpha(q) = {alpha} at q = {at:?}")]
    NonPositiveDamping { alpha: f64, at: Vec<f64> },

    /// A state or derived quantity stopped being finite mid-computation.
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    /// The diffusion matrix is singular (or numerically so) where the
    /// closed-form rate reconstruction needs its inverse.
    #[error("singular diffusion matrix at grid index {index} (cond ~ {cond:.3e})")]
    SingularDiffusion { index: usize, cond: f64 },

    /// The controllability Gramian has no usable spectrum.
    #[error("singular controllability Gramian: {0}")]
    SingularGramian(String),

    /// Path functionals that require a centered start.
    #[error("path must start at the origin, got |psi(0)| = {0:.3e}")]
    NonzeroStart(f64),

    /// Sphere scans and related geometry are implemented for d <= 3.
    #[error("not supported: {0}")]
    NotSupported(String),

    /// Too few usable data points for a fit or summary statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV/table input.
    #[error("parse error: {0}")]
    Parse(String),
}
