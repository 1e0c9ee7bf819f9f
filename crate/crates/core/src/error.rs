use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown builtin metric `{0}`")]
    UnknownMetric(String),
    #[error("ellipticity violated: epsilon = {epsilon} requires epsilon < 1")]
    EllipticityViolated { epsilon: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("wave packet under-resolved: width {width:.3e} < 4 dx = {min_width:.3e}")]
    UnderResolved { width: f64, min_width: f64 },
    #[error("symbol frequency support exceeds the resolvable lattice range")]
    SymbolSupportExceedsLattice,
    #[error("Chebyshev degree cap {cap} exceeded before tolerance {tol:.1e} was met")]
    DegreeCapExceeded { cap: usize, tol: f64 },
    #[error("non-smooth spectral function: Chebyshev filtering requires a smooth bump")]
    NonSmoothBump,
    #[error("partition of unity defect {defect:.3e} exceeds 1e-12 on the covered range")]
    PartitionDefect { defect: f64 },
    #[error("eikonal iteration stagnated at residual {residual:.3e}; estimated minimal admissible R = {r_min:.1}")]
    EikonalStagnation { residual: f64, r_min: f64 },
    #[error("caustic encountered: WKB window underflow at alpha = {alpha:.3e}")]
    CausticWindowUnderflow { alpha: f64 },
    #[error("oscillation under-resolved: dx*max|grad S|/h = {ratio:.2} > pi")]
    OscillationUnderResolved { ratio: f64 },
    #[error("quadrature refinement budget exceeded (last delta {delta:.3e})")]
    QuadratureBudget { delta: f64 },
    #[error("inadmissible pair: {0}")]
    InadmissiblePair(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported dimension {d} for {what}")]
    UnsupportedDimension { d: usize, what: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;
