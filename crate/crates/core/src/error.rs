use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(ValidationReport),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("the Matsubara series is undefined at zero temperature; use the quadrature method")]
    ZeroTemperature,

    #[error("power noise is singular at omega = 0")]
    ZeroFrequency,

    #[error("non-finite value in {what} at s = {s}")]
    NonFinite { what: &'static str, s: f64 },

    #[error("boundary matching is ill-conditioned at t = {t} (condition number {condition:e})")]
    SingularBoundary { t: f64, condition: f64 },

    #[error("phase matrix block is singular at t = {t} (det = {det:e})")]
    SingularPropagator { t: f64, det: f64 },

    #[error("noise matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, norm {norm:e})")]
    NotPsd { min_eigenvalue: f64, norm: f64 },

    #[error("covariance violates the uncertainty principle (symplectic eigenvalue {nu})")]
    Unphysical { nu: f64 },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("insufficient spectral coverage: omega_max = {omega_max} covers {coverage:.4} of the dissipation weight (need omega_max >= 10 cutoff)")]
    InsufficientCoverage { omega_max: f64, coverage: f64 },

    #[error("unknown scenario `{name}`; available: {}", available.join(", "))]
    UnknownScenario { name: String, available: Vec<String> },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("at t = {t}: {source}")]
    AtFinalTime { t: f64, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at(self, t: f64) -> Error {
        match self {
            e @ Error::AtFinalTime { .. } => e,
            e => Error::AtFinalTime { t, source: Box::new(e) },
        }
    }
}
