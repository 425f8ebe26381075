use thiserror::Error;

/// Every failure mode of the library, named after the condition that triggered it.
#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "degenerate critical point at {coords:?}: smallest |Hessian eigenvalue| = {min_abs_eig:e}"
    )]
    DegenerateCritical { coords: Vec<f64>, min_abs_eig: f64 },

    #[error(
        "critical point scan too coarse: seeds converged to {a:?} and {b:?} with different values"
    )]
    ScanTooCoarse { a: Vec<f64>, b: Vec<f64> },

    #[error("exterior derivative of a top-degree form (degree {0})")]
    TopDegree(usize),

    #[error("operation undefined on degree-0 forms")]
    BottomDegree,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("1-form is not closed: defect {0:e}")]
    NonClosedForm(f64),

    #[error("degree {q} does not match the critical index {k}")]
    DegreeMismatch { q: usize, k: usize },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {worst_residual:e})")]
    NoConvergence {
        iterations: usize,
        worst_residual: f64,
    },

    #[error("spectral gap not open: ratio {ratio:e} (largest small / smallest large)")]
    GapNotOpen { ratio: f64 },

    #[error("small-cluster cardinality changed across the t-grid: {counts:?}")]
    ClusterCardinalityChanged { counts: Vec<usize> },

    #[error("trajectory not captured within max_time {max_time}")]
    NoCapture { max_time: f64 },

    #[error("Morse-Smale transversality violated numerically: {0}")]
    NonTransversal(String),

    #[error("unstable cell quadrature not converged: change {change:e} > {tol:e}")]
    CellNotConverged { change: f64, tol: f64 },

    #[error("quasi-mode supports overlap: radius {eta} vs critical distance {distance}")]
    SupportOverlap { eta: f64, distance: f64 },

    #[error("Gram matrix singular: condition number {0:e}")]
    SingularGram(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short name of the variant, used in CLI reports.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DegenerateCritical { .. } => "DegenerateCritical",
            Error::ScanTooCoarse { .. } => "ScanTooCoarse",
            Error::TopDegree(_) => "TopDegree",
            Error::BottomDegree => "BottomDegree",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NonClosedForm(_) => "NonClosedForm",
            Error::DegreeMismatch { .. } => "DegreeMismatch",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::GapNotOpen { .. } => "GapNotOpen",
            Error::ClusterCardinalityChanged { .. } => "ClusterCardinalityChanged",
            Error::NoCapture { .. } => "NoCapture",
            Error::NonTransversal(_) => "NonTransversal",
            Error::CellNotConverged { .. } => "CellNotConverged",
            Error::SupportOverlap { .. } => "SupportOverlap",
            Error::SingularGram(_) => "SingularGram",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
