use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report. `code()` and `module()` give the
/// stable machine-readable form used by the CLI and the C ABI.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("{module}: precondition violated: {reason}")]
    Precondition { module: &'static str, reason: String },

    #[error("divergent transform: {0}")]
    DivergentTransform(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("eigenvalue not bracketed: {0}")]
    NotBracketed(String),

    #[error("scattering solver failure: {0}")]
    Solver(String),

    #[error("hyperbolic domain violated: |G~| = {g_tilde:e} >= F~ = {f_tilde:e} at q = {q}")]
    HyperbolicDomain { q: f64, f_tilde: f64, g_tilde: f64 },

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput { field: field.into(), reason: reason.into() }
    }

    pub fn precondition(module: &'static str, reason: impl Into<String>) -> Self {
        Error::Precondition { module, reason: reason.into() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput { .. } => "invalid_input",
            Error::Precondition { .. } => "precondition",
            Error::DivergentTransform(_) => "divergent_transform",
            Error::Quadrature(_) => "quadrature",
            Error::NotBracketed(_) => "not_bracketed",
            Error::Solver(_) => "solver",
            Error::HyperbolicDomain { .. } => "hyperbolic_domain",
            Error::Provenance(_) => "provenance",
            Error::Budget(_) => "budget",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::Io { .. } => "io",
        }
    }

    pub fn module(&self) -> &'static str {
        match self {
            Error::InvalidInput { .. } => "config",
            Error::Precondition { module, .. } => module,
            Error::DivergentTransform(_) => "potentials",
            Error::Quadrature(_) => "energy",
            Error::NotBracketed(_) | Error::Solver(_) => "scattering",
            Error::HyperbolicDomain { .. } | Error::Provenance(_) => "bogoliubov",
            Error::Budget(_) => "lattice",
            Error::DegenerateFit(_) => "energy",
            Error::Io { .. } => "cli",
        }
    }
}
