//! Propagating-mode energy transport in randomly perturbed Pekeris waveguides.
//!
//! The crate is organised along the computation pipeline:
//!
//! * [`pekeris`]: discrete mode spectrum and continuum mode parameters of the
//!   unperturbed two-layer waveguide.
//! * [`medium`]: transverse covariance kernels of the random inhomogeneities and
//!   their cosine spectral integrals `S(v1, v2)`.
//! * [`coupling`]: statistical coupling coefficients (transport matrix, radiative
//!   loss, phase terms).
//! * [`power`]: coupled power equations and mean mode amplitudes.
//! * [`decay`]: exponential decay rate of the total propagating energy and its
//!   limiting regimes.
//! * [`montecarlo`]: Feynman–Kac estimator of the mean mode powers with a killed
//!   jump process, used as an independent check on [`power`].
//! * [`diffusion`]: the large-mode-count diffusion limit in the normalised mode
//!   index `u ∈ [0, 1]`.

pub mod coupling;
pub mod decay;
pub mod diffusion;
mod error;
pub mod linalg;
pub mod medium;
pub mod montecarlo;
pub mod pekeris;
pub mod power;
pub mod quadrature;

pub use coupling::CouplingCoefficients;
pub use decay::DecayAnalysis;
pub use diffusion::{BoundaryCondition, DiffusionCoefficient, DiffusionSolution};
pub use error::{Error, Result};
pub use medium::{CovarianceSpec, Kernel};
pub use montecarlo::{JumpChainSpec, MCEstimate};
pub use pekeris::{ModeSet, RadiatingModeParams, WaveguideParams};
pub use power::{PowerSystem, PowerTrajectory};
