//! Exponential decay rate of the total propagating energy,
//! `Λ_∞ = inf_{X ≥ 0, |X| = 1} ⟨(−Γ^c + diag Λ^c) X, X⟩`, and its limiting regimes.

use nalgebra::{DMatrix, DVector};
use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use crate::linalg::symmetric_eigen;
use crate::power::{total_energy, PowerSystem, PowerTrajectory};
use crate::{Error, Result};

/// Largest negative eigenvector entry tolerated before sign normalisation fails.
const PERRON_TOL: f64 = 1e-10;
/// Minimum spectral gap times fit start for a slope fit.
pub const REQUIRED_GAP_PRODUCT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DecayAnalysis {
    pub lambda_inf: f64,
    /// Nonnegative unit minimiser of the quadratic form.
    pub minimizer: DVector<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// `λ₂ − λ₁` of `−Γ^c + diag Λ^c` (infinite for a single mode).
    pub spectral_gap: f64,
    pub fitted_slope: Option<f64>,
}

/// Number of connected components of the off-diagonal support graph.
pub fn connected_components(transport: &DMatrix<f64>) -> usize {
    let n = transport.nrows();
    let mut uf = UnionFind::<usize>::new(n);
    for j in 0..n {
        for l in j + 1..n {
            if transport[(j, l)] > 0.0 || transport[(l, j)] > 0.0 {
                uf.union(j, l);
            }
        }
    }
    let mut labels = uf.into_labeling();
    labels.sort_unstable();
    labels.dedup();
    labels.len()
}

fn symmetric_part(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * m.amax() {
        return Err(Error::InvalidParameter(format!(
            "transport matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok((m + m.transpose()) * 0.5)
}

/// λ_min of `−Γ^c + diag(Λ^c)` with its sign-normalised eigenvector.
pub fn decay_rate(system: &PowerSystem) -> Result<DecayAnalysis> {
    let components = connected_components(system.transport());
    if components > 1 {
        return Err(Error::ReducibleTransportMatrix { components });
    }
    let h = symmetric_part(&(-system.generator()))?;
    let eig = symmetric_eigen(&h)?;
    let n = system.len();
    let mut x = eig.vectors.column(0).into_owned();
    if x.sum() < 0.0 {
        x = -x;
    }
    let most_negative = x.min();
    if most_negative < -PERRON_TOL {
        return Err(Error::EigenFailure(format!(
            "leading eigenvector has entry {most_negative:e} of both signs"
        )));
    }
    x.apply(|v| *v = v.max(0.0));
    x /= x.norm();

    let loss = system.loss();
    let lower = loss.min();
    let upper = loss.mean();
    let raw = eig.values[0];
    // The bounds hold exactly in exact arithmetic; only roundoff may cross them.
    let slack = 1e-12 * h.amax().max(upper);
    if raw < lower - slack || raw > upper + slack {
        return Err(Error::EigenFailure(format!(
            "λ_min = {raw:e} outside [{lower:e}, {upper:e}]"
        )));
    }
    let gap = if n > 1 { eig.values[1] - eig.values[0] } else { f64::INFINITY };
    Ok(DecayAnalysis {
        lambda_inf: raw.clamp(lower, upper),
        minimizer: x,
        lower_bound: lower,
        upper_bound: upper,
        spectral_gap: gap,
        fitted_slope: None,
    })
}

/// Rescaling applied by [`regime_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `(τΓ, Λ)`
    WeakCoupling,
    /// `(Γ/τ, Λ)`
    StrongCoupling,
    /// `(Γ, τΛ)`
    WeakLoss,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::WeakCoupling => "weak_coupling",
            Regime::StrongCoupling => "strong_coupling",
            Regime::WeakLoss => "weak_loss",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak_coupling" => Ok(Regime::WeakCoupling),
            "strong_coupling" => Ok(Regime::StrongCoupling),
            "weak_loss" => Ok(Regime::WeakLoss),
            other => Err(Error::InvalidParameter(format!("unknown regime `{other}`"))),
        }
    }
}

/// One row of a regime sweep. `observed` is the quantity with a finite limit
/// (`Λ^τ_∞` or `Λ^τ_∞/τ`), `target` that limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimePoint {
    pub tau: f64,
    pub lambda_inf: f64,
    pub observed: f64,
    pub target: f64,
}

impl RegimePoint {
    pub fn relative_error(&self) -> f64 {
        if self.target == 0.0 {
            self.observed.abs()
        } else {
            (self.observed - self.target).abs() / self.target.abs()
        }
    }
}

/// Limit of the regime as `τ → 0` and whether `Λ^τ_∞` is divided by `τ`.
fn regime_target(system: &PowerSystem, regime: Regime) -> Result<(f64, bool)> {
    let loss = system.loss();
    match regime {
        Regime::StrongCoupling => Ok((loss.mean(), false)),
        Regime::WeakLoss => Ok((loss.mean(), true)),
        Regime::WeakCoupling => {
            let zero: Vec<usize> = (0..loss.len()).filter(|&j| loss[j] == 0.0).collect();
            if zero.is_empty() {
                return Ok((loss.min(), false));
            }
            // λ_min of −Γ^c restricted to the modes without loss.
            let g = system.transport();
            let sub = DMatrix::from_fn(zero.len(), zero.len(), |a, b| -g[(zero[a], zero[b])]);
            let eig = symmetric_eigen(&symmetric_part(&sub)?)?;
            Ok((eig.values[0], true))
        }
    }
}

pub fn regime_sweep(system: &PowerSystem, taus: &[f64], regime: Regime) -> Result<Vec<RegimePoint>> {
    if taus.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("τ values must be positive and finite".into()));
    }
    let (target, divide) = regime_target(system, regime)?;
    taus.par_iter()
        .map(|&tau| {
            let scaled = match regime {
                Regime::WeakCoupling => system.rescaled(tau, 1.0)?,
                Regime::StrongCoupling => system.rescaled(1.0 / tau, 1.0)?,
                Regime::WeakLoss => system.rescaled(1.0, tau)?,
            };
            let lambda_inf = decay_rate(&scaled)?.lambda_inf;
            Ok(RegimePoint {
                tau,
                lambda_inf,
                observed: if divide { lambda_inf / tau } else { lambda_inf },
                target,
            })
        })
        .collect()
}

/// Least-squares slope of `ln Σ_j T_j^l(z)` over `z ≥ z_min` (`l` 1-based).
pub fn fit_slope(traj: &PowerTrajectory, analysis: &DecayAnalysis, l: usize, z_min: f64) -> Result<f64> {
    let product = analysis.spectral_gap * z_min;
    if !(product >= REQUIRED_GAP_PRODUCT) {
        return Err(Error::InsufficientHorizon {
            product,
            required: REQUIRED_GAP_PRODUCT,
        });
    }
    let energy = total_energy(traj, l)?;
    let pts: Vec<(f64, f64)> = traj
        .z_grid
        .iter()
        .zip(&energy)
        .filter(|(z, _)| **z >= z_min)
        .map(|(&z, &e)| (z, e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least two grid points beyond z_min = {z_min}"
        )));
    }
    if pts.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::InvalidGrid("total energy underflowed in the fit window".into()));
    }
    Ok(least_squares_slope(&pts))
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
