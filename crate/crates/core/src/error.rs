use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the numerical pipeline can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("the waveguide supports no propagating mode (n1·k·d·θ/π = {ratio})")]
    NoPropagatingModes { ratio: f64 },

    #[error("no sign change of the dispersion function for mode {mode} on [{lo}, {hi}]")]
    RootNotBracketed { mode: usize, lo: f64, hi: f64 },

    #[error("root search for mode {mode} stopped at residual {residual:e} after {iterations} iterations")]
    RootNotConverged {
        mode: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("spectral parameter γ = {gamma} must satisfy γ < k² = {k2} and γ ≠ 0")]
    InvalidSpectralParameter { gamma: f64, k2: f64 },

    #[error("quadrature did not converge: {0}")]
    QuadratureNotConverged(String),

    #[error("covariance kernel is not symmetric: {0}")]
    KernelNotSymmetric(String),

    #[error("covariance kernel is not positive semidefinite (min eigenvalue {min_eig:e}, max {max_eig:e})")]
    KernelNotPositiveSemidefinite { min_eig: f64, max_eig: f64 },

    #[error("kernel table, line {line}: {message}")]
    KernelTable { line: usize, message: String },

    #[error("coefficient matrices are not square or sizes disagree: {0}")]
    NonSquareCoefficients(String),

    #[error("negative loss coefficient Λ[{index}] = {value}")]
    NegativeLambda { index: usize, value: f64 },

    #[error("negative transfer rate Γ[{row}][{col}] = {value}")]
    NegativeTransfer { row: usize, col: usize, value: f64 },

    #[error("power solution lost positivity: T[{row}][{col}] = {value:e} at z = {z}")]
    NegativePower {
        row: usize,
        col: usize,
        value: f64,
        z: f64,
    },

    #[error("invalid propagation grid: {0}")]
    InvalidGrid(String),

    #[error("transport matrix is reducible ({components} connected components)")]
    ReducibleTransportMatrix { components: usize },

    #[error("fit horizon too short: spectral gap × z_min = {product} < {required}")]
    InsufficientHorizon { product: f64, required: f64 },

    #[error("invalid horizon L = {0}")]
    InvalidHorizon(f64),

    #[error("argument {value} outside the domain {domain}")]
    DomainError { value: f64, domain: &'static str },

    #[error("diffusion solve became unstable: min value {min_value:e} at z = {z}")]
    InstabilityDetected { min_value: f64, z: f64 },

    #[error("covariance kernel is not band limited")]
    KernelNotBandLimited,

    #[error("eigen decomposition failed: {0}")]
    EigenFailure(String),
}

impl Error {
    /// Stable identifier used in diagnostics and process exit messages.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NoPropagatingModes { .. } => "NoPropagatingModes",
            Error::RootNotBracketed { .. } => "RootNotBracketed",
            Error::RootNotConverged { .. } => "RootNotConverged",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::InvalidSpectralParameter { .. } => "InvalidSpectralParameter",
            Error::QuadratureNotConverged(_) => "QuadratureNotConverged",
            Error::KernelNotSymmetric(_) => "KernelNotSymmetric",
            Error::KernelNotPositiveSemidefinite { .. } => "KernelNotPositiveSemidefinite",
            Error::KernelTable { .. } => "KernelTable",
            Error::NonSquareCoefficients(_) => "NonSquareCoefficients",
            Error::NegativeLambda { .. } => "NegativeLambda",
            Error::NegativeTransfer { .. } => "NegativeTransfer",
            Error::NegativePower { .. } => "NegativePower",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::ReducibleTransportMatrix { .. } => "ReducibleTransportMatrix",
            Error::InsufficientHorizon { .. } => "InsufficientHorizon",
            Error::InvalidHorizon(_) => "InvalidHorizon",
            Error::DomainError { .. } => "DomainError",
            Error::InstabilityDetected { .. } => "InstabilityDetected",
            Error::KernelNotBandLimited => "KernelNotBandLimited",
            Error::EigenFailure(_) => "EigenFailure",
        }
    }
}
