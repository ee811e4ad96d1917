use thiserror::Error;

/// Errors produced anywhere in the lab.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("lipschitz violation: profile slope {observed:.6} exceeds declared constant {declared:.6}")]
    LipschitzViolation { observed: f64, declared: f64 },

    #[error("point {0:?} lies outside the domain")]
    OutOfDomain([f64; 3]),

    #[error("non-elliptic coefficient spec: {0}")]
    NonElliptic(String),

    #[error("incompatible data: residual {residual:?} exceeds tolerance {tolerance:e}")]
    Incompatible { residual: Vec<f64>, tolerance: f64 },

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("under-resolved: {0}")]
    UnderResolved(String),

    #[error("interface mismatch: {0}")]
    Interface(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("exponent p = {p} outside the admissible range [1, {limit})")]
    ExponentRange { p: f64, limit: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular evaluation at coincident points")]
    Singularity,

    #[error("missing kernels for {0} pole(s)")]
    Coverage(usize),

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status: 1 check failure, 2 config or io, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Incompatible { .. } => 1,
            Error::NotConverged { .. } | Error::Numeric(_) | Error::Singularity | Error::Coverage(_) => 3,
            _ => 2,
        }
    }

    /// Stable short name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGeometry(_) => "invalid-geometry",
            Error::LipschitzViolation { .. } => "lipschitz-violation",
            Error::OutOfDomain(_) => "out-of-domain",
            Error::NonElliptic(_) => "non-elliptic",
            Error::Incompatible { .. } => "incompatible-data",
            Error::NotConverged { .. } => "not-converged",
            Error::Numeric(_) => "numeric",
            Error::UnderResolved(_) => "under-resolved",
            Error::Interface(_) => "interface",
            Error::Unsupported(_) => "unsupported",
            Error::ExponentRange { .. } => "exponent-range",
            Error::Domain(_) => "domain",
            Error::Singularity => "singularity",
            Error::Coverage(_) => "coverage",
            Error::UnknownStrategy { .. } => "unknown-strategy",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
