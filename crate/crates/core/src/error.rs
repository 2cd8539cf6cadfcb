use thiserror::Error;

/// Errors raised by the simulator, the verifiers and the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("negative density {0} passed to a constitutive law")]
    NegativeDensity(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("density is not bounded away from zero (min = {min})")]
    SingularDensity { min: f64 },

    #[error("CFL condition violated: max|v| dt/dx = {ratio:.4} > 1")]
    Cfl { ratio: f64 },

    #[error("non-positive density {value} in cell {cell} after continuity step")]
    Positivity { cell: usize, value: f64 },

    #[error("forcing evaluated at t = {t}, outside sampled range [{start}, {end}]")]
    ForcingRange { t: f64, start: f64, end: f64 },

    #[error("fixed-point iteration failed: {0}")]
    FixedPoint(String),

    #[error("time step underflow: dt = {dt:e} below minimum {dt_min:e} ({cause})")]
    DtUnderflow { dt: f64, dt_min: f64, cause: String },

    #[error("test function support mismatch: {0}")]
    Support(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
