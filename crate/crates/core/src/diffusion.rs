//! Large-mode-count limit of the power equations: the diffusion equation
//! `∂_z T = ∂_u(a_∞(u) ∂_u T)` on `u ∈ [0, 1]`, reflecting at `u = 0` and either
//! absorbing (radiative loss) or reflecting at `u = 1`.
//!
//! The spatial operator is a cell-centred finite-volume discretisation in
//! divergence form with `a_∞` sampled at the cell faces. It is symmetric, so
//! the eigenproblem and the time stepping share one tridiagonal matrix.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::decay::least_squares_slope;
use crate::linalg::{solve_tridiagonal, symmetric_eigen};
use crate::medium::{band_limited_check, CovarianceSpec, ProbeGrid};
use crate::pekeris::{solve_modes, WaveguideParams};
use crate::power::PowerSystem;
use crate::quadrature::{gauss_legendre, mapped};
use crate::{Error, Result};

pub const DEFAULT_U_RESOLUTION: usize = 256;
pub const MIN_U_RESOLUTION: usize = 32;
/// Backward-Euler half steps that start every Crank–Nicolson run.
const RANNACHER_HALF_STEPS: usize = 4;

/// `a_∞(u) = a0 / (1 − (1 − ratio)(θu)²)` with `ratio = π²/(a²d²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionCoefficient {
    pub a0: f64,
    pub theta: f64,
    pub ratio: f64,
    /// `S(π, π)` when built from a medium, otherwise `NaN`.
    pub s0: f64,
}

impl DiffusionCoefficient {
    pub fn new(a0: f64, theta: f64, ratio: f64) -> Result<Self> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(Error::InvalidParameter(format!("a0 must be > 0, got {a0}")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!("θ must lie in (0, 1), got {theta}")));
        }
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!("ratio must be > 0, got {ratio}")));
        }
        if (1.0 - ratio) * theta * theta >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "a_∞ is not positive on [0, 1]: (1 − {ratio})·{theta}² ≥ 1"
            )));
        }
        Ok(DiffusionCoefficient {
            a0,
            theta,
            ratio,
            s0: f64::NAN,
        })
    }

    /// Flat coefficient `a_∞ ≡ a0`.
    pub fn constant(a0: f64) -> Result<Self> {
        Self::new(a0, 0.5, 1.0)
    }

    /// `a0 = π² S0 / (2 a n1⁴ d⁴ θ²)` with `S0 = S(π, π)`.
    pub fn from_medium(params: &WaveguideParams, spec: &CovarianceSpec) -> Result<Self> {
        let s0 = spec.eval_s(PI, PI)?;
        let (n1, d, theta, a) = (params.n1(), params.d(), params.theta(), spec.a());
        let a0 = PI * PI * s0 / (2.0 * a * n1.powi(4) * d.powi(4) * theta * theta);
        let mut c = Self::new(a0, theta, PI * PI / (a * a * d * d))?;
        c.s0 = s0;
        Ok(c)
    }

    fn eval(&self, u: f64) -> f64 {
        self.a0 / (1.0 - (1.0 - self.ratio) * (self.theta * u).powi(2))
    }
}

pub fn a_infinity(coeff: &DiffusionCoefficient, u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::DomainError {
            value: u,
            domain: "[0, 1]",
        });
    }
    Ok(coeff.eval(u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Reflecting at 0, absorbing at 1 (lossy).
    NeumannDirichlet,
    /// Reflecting at both ends (lossless).
    NeumannNeumann,
}

impl BoundaryCondition {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryCondition::NeumannDirichlet => "neumann_dirichlet",
            BoundaryCondition::NeumannNeumann => "neumann_neumann",
        }
    }
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neumann_dirichlet" | "lossy" => Ok(BoundaryCondition::NeumannDirichlet),
            "neumann_neumann" | "lossless" => Ok(BoundaryCondition::NeumannNeumann),
            other => Err(Error::InvalidParameter(format!("unknown boundary condition `{other}`"))),
        }
    }
}

/// Symmetric tridiagonal finite-volume operator on `n` cells.
#[derive(Debug, Clone)]
struct Operator {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Operator {
    fn new(coeff: &DiffusionCoefficient, bc: BoundaryCondition, n: usize) -> Self {
        let h = 1.0 / n as f64;
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n - 1 {
            // face between cells i and i+1
            let w = coeff.eval((i + 1) as f64 * h) / (h * h);
            upper[i] = w;
            lower[i + 1] = w;
            diag[i] -= w;
            diag[i + 1] -= w;
        }
        if bc == BoundaryCondition::NeumannDirichlet {
            // T = 0 on the face u = 1, half a cell away from the last centre
            diag[n - 1] -= 2.0 * coeff.eval(1.0) / (h * h);
        }
        Operator { lower, diag, upper }
    }

    fn dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j == i + 1 {
                self.upper[i]
            } else if i == j + 1 {
                self.lower[i]
            } else {
                0.0
            }
        })
    }

    fn max_rate(&self) -> f64 {
        self.diag.iter().fold(0.0_f64, |m, d| m.max(2.0 * d.abs()))
    }

    /// One θ-scheme step: `(I − θ dz A) x' = (I + (1 − θ) dz A) x`.
    fn step(&self, x: &[f64], dz: f64, theta: f64) -> Vec<f64> {
        let n = x.len();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let mut ax = self.diag[i] * x[i];
            if i > 0 {
                ax += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                ax += self.upper[i] * x[i + 1];
            }
            rhs[i] = x[i] + (1.0 - theta) * dz * ax;
        }
        let lo: Vec<f64> = self.lower.iter().map(|v| -theta * dz * v).collect();
        let di: Vec<f64> = self.diag.iter().map(|v| 1.0 - theta * dz * v).collect();
        let up: Vec<f64> = self.upper.iter().map(|v| -theta * dz * v).collect();
        solve_tridiagonal(&lo, &di, &up, &rhs)
    }
}

/// Cell centres of a uniform grid with `n` cells.
pub fn cell_centres(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

/// Cell averages of `phi` (4-point Gauss–Legendre per cell).
pub fn cell_averages(phi: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
    let rule = gauss_legendre(4);
    (0..n)
        .map(|i| {
            let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
            mapped(&rule, a, b).map(|(u, w)| w * phi(u)).sum::<f64>() * n as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSolution {
    /// Cell centres.
    pub u_grid: Vec<f64>,
    pub z_grid: Vec<f64>,
    /// `values[m][i]` is the cell average at `z_grid[m]`.
    pub values: Vec<Vec<f64>>,
    pub bc: BoundaryCondition,
    pub initial: Vec<f64>,
    /// Largest change of the final profile when the z step is halved.
    pub temporal_error: f64,
}

impl DiffusionSolution {
    /// `∫₀¹ T(z_m, u) du`.
    pub fn mass(&self, m: usize) -> f64 {
        self.values[m].iter().sum::<f64>() / self.u_grid.len() as f64
    }

    /// Piecewise-linear reconstruction through the cell centres, using the
    /// boundary condition beyond the outermost centres.
    pub fn value_at(&self, m: usize, u: f64) -> f64 {
        interpolate(&self.values[m], self.bc, u)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "z,u,value")?;
        for (z, row) in self.z_grid.iter().zip(&self.values) {
            for (u, v) in self.u_grid.iter().zip(row) {
                writeln!(w, "{z:e},{u:e},{v:e}")?;
            }
        }
        Ok(())
    }
}

fn interpolate(values: &[f64], bc: BoundaryCondition, u: f64) -> f64 {
    let n = values.len();
    let x = u * n as f64 - 0.5;
    if x <= 0.0 {
        return values[0];
    }
    if x >= (n - 1) as f64 {
        return match bc {
            BoundaryCondition::NeumannNeumann => values[n - 1],
            // linear between the last centre and the zero on the boundary face
            BoundaryCondition::NeumannDirichlet => values[n - 1] * (1.0 - 2.0 * (x - (n - 1) as f64)),
        };
    }
    let i = x.floor() as usize;
    let t = x - i as f64;
    values[i] * (1.0 - t) + values[i + 1] * t
}

fn check_z_grid(z_grid: &[f64]) -> Result<()> {
    if z_grid.first() != Some(&0.0) || z_grid.iter().any(|z| !z.is_finite()) || z_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("z grid must start at 0 and increase strictly".into()));
    }
    Ok(())
}

fn march(op: &Operator, initial: &[f64], z_grid: &[f64], dz_max: f64, floor: f64) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![initial.to_vec()];
    let mut x = initial.to_vec();
    let mut started = false;
    for w in z_grid.windows(2) {
        let span = w[1] - w[0];
        let mut steps = (span / dz_max).ceil().max(1.0) as usize;
        let mut z = w[0];
        if !started {
            // damp the stiff components of rough data before Crank–Nicolson
            let dz = span / steps as f64;
            let half = 0.5 * dz.min(span / RANNACHER_HALF_STEPS as f64 * 2.0);
            let n_half = RANNACHER_HALF_STEPS.min(((span / half).round() as usize).max(1));
            for _ in 0..n_half {
                x = op.step(&x, half, 1.0);
                z += half;
            }
            started = true;
            let left = w[1] - z;
            steps = if left > 0.0 { (left / dz_max).ceil().max(1.0) as usize } else { 0 };
        }
        let dz = if steps > 0 { (w[1] - z) / steps as f64 } else { 0.0 };
        for _ in 0..steps {
            x = op.step(&x, dz, 0.5);
        }
        let min = x.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < floor {
            return Err(Error::InstabilityDetected { min_value: min, z: w[1] });
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Default z step: a fixed multiple of `h / a_max`, which keeps the
/// Crank–Nicolson error of the smooth modes below the O(h²) spatial error.
fn default_dz(coeff: &DiffusionCoefficient, n: usize) -> f64 {
    let a_max = coeff.eval(0.0).max(coeff.eval(1.0));
    0.5 / (n as f64 * a_max)
}

/// Solves the diffusion equation from cell averages `initial`.
pub fn solve_diffusion_cells(
    coeff: &DiffusionCoefficient,
    initial: &[f64],
    bc: BoundaryCondition,
    z_grid: &[f64],
) -> Result<DiffusionSolution> {
    let n = initial.len();
    if n < MIN_U_RESOLUTION {
        return Err(Error::InvalidGrid(format!("u resolution {n} < {MIN_U_RESOLUTION}")));
    }
    check_z_grid(z_grid)?;
    let op = Operator::new(coeff, bc, n);
    let scale = initial.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = -1e-8 * scale;
    let dz = default_dz(coeff, n);
    let values = march(&op, initial, z_grid, dz, floor)?;
    let check = march(&op, initial, z_grid, 0.5 * dz, floor)?;
    let temporal_error = values
        .last()
        .unwrap()
        .iter()
        .zip(check.last().unwrap())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    debug_assert!(op.max_rate() > 0.0);
    Ok(DiffusionSolution {
        u_grid: cell_centres(n),
        z_grid: z_grid.to_vec(),
        values,
        bc,
        initial: initial.to_vec(),
        temporal_error,
    })
}

pub fn solve_diffusion(
    coeff: &DiffusionCoefficient,
    phi: impl Fn(f64) -> f64,
    bc: BoundaryCondition,
    z_grid: &[f64],
    u_resolution: usize,
) -> Result<DiffusionSolution> {
    if u_resolution < MIN_U_RESOLUTION {
        return Err(Error::InvalidGrid(format!("u resolution {u_resolution} < {MIN_U_RESOLUTION}")));
    }
    solve_diffusion_cells(coeff, &cell_averages(phi, u_resolution), bc, z_grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SturmLiouvilleSpectrum {
    /// Decreasing eigenvalues, Richardson-extrapolated from `n` and `2n` cells.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues of the `n`-cell operator itself.
    pub raw_eigenvalues: Vec<f64>,
    /// Eigenfunctions at the cell centres, unit `L²(0, 1)` norm, positive
    /// first entry.
    pub eigenfunctions: Vec<Vec<f64>>,
    pub u_grid: Vec<f64>,
    pub bc: BoundaryCondition,
}

impl SturmLiouvilleSpectrum {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "index,eigenvalue")?;
        let first = if self.bc == BoundaryCondition::NeumannNeumann { 0 } else { 1 };
        for (i, v) in self.eigenvalues.iter().enumerate() {
            writeln!(w, "{},{v:e}", i + first)?;
        }
        Ok(())
    }
}

fn leading_eigenpairs(coeff: &DiffusionCoefficient, bc: BoundaryCondition, n: usize, count: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let op = Operator::new(coeff, bc, n);
    // eigenvalues of −A ascending are those of A descending
    let eig = symmetric_eigen(&(-op.dense()))?;
    let values = (0..count).map(|i| -eig.values[i]).collect();
    Ok((values, eig.vectors.columns(0, count).into_owned()))
}

/// Leading eigenpairs of the finite-volume operator. In the lossless case the
/// list starts with `λ₀ = 0` (set exactly; its eigenfunction is constant).
pub fn sturm_liouville_spectrum(
    coeff: &DiffusionCoefficient,
    bc: BoundaryCondition,
    n_eigs: usize,
    u_resolution: usize,
) -> Result<SturmLiouvilleSpectrum> {
    if u_resolution < MIN_U_RESOLUTION || n_eigs == 0 || n_eigs > u_resolution / 4 {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ n_eigs ≤ u_resolution/4 and u_resolution ≥ {MIN_U_RESOLUTION}, got {n_eigs} and {u_resolution}"
        )));
    }
    let n = u_resolution;
    let (coarse, fine) = rayon::join(
        || leading_eigenpairs(coeff, bc, n, n_eigs),
        || leading_eigenpairs(coeff, bc, 2 * n, n_eigs),
    );
    let (mut raw, vectors) = coarse?;
    let (fine, _) = fine?;
    let mut eigenvalues: Vec<f64> = raw.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
    let h = 1.0 / n as f64;
    let mut eigenfunctions: Vec<Vec<f64>> = (0..n_eigs)
        .map(|i| {
            let mut v: Vec<f64> = vectors.column(i).iter().map(|x| x / h.sqrt()).collect();
            if v[0] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    if bc == BoundaryCondition::NeumannNeumann {
        raw[0] = 0.0;
        eigenvalues[0] = 0.0;
        eigenfunctions[0] = vec![1.0; n];
    }
    Ok(SturmLiouvilleSpectrum {
        eigenvalues,
        raw_eigenvalues: raw,
        eigenfunctions,
        u_grid: cell_centres(n),
        bc,
    })
}

/// Continuum decay rate `−λ₁` of the lossy problem.
pub fn continuum_decay_rate(coeff: &DiffusionCoefficient, u_resolution: usize) -> Result<f64> {
    Ok(-sturm_liouville_spectrum(coeff, BoundaryCondition::NeumannDirichlet, 1, u_resolution)?.eigenvalues[0])
}

/// Least-squares slope of `ln ∫T(z, u) du` over `z ≥ z_min`.
pub fn fit_mass_slope(sol: &DiffusionSolution, z_min: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = (0..sol.z_grid.len())
        .filter(|&m| sol.z_grid[m] >= z_min)
        .map(|m| (sol.z_grid[m], sol.mass(m).ln()))
        .collect();
    if pts.len() < 2 || pts.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::InvalidGrid("need two positive-mass grid points beyond z_min".into()));
    }
    Ok(least_squares_slope(&pts))
}

/// Fits `sup_u |T(z, u) − ∫φ| ≈ C e^{λz}` over `z ≥ z_min`; returns `(λ, C)`.
pub fn fit_equilibration(sol: &DiffusionSolution, z_min: f64) -> Result<(f64, f64)> {
    let mean = sol.initial.iter().sum::<f64>() / sol.initial.len() as f64;
    let pts: Vec<(f64, f64)> = (0..sol.z_grid.len())
        .filter(|&m| sol.z_grid[m] >= z_min)
        .map(|m| {
            let dev = sol.values[m].iter().fold(0.0_f64, |acc, v| acc.max((v - mean).abs()));
            (sol.z_grid[m], dev.ln())
        })
        .collect();
    if pts.len() < 2 || pts.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::InvalidGrid("need two grid points with nonzero deviation beyond z_min".into()));
    }
    let slope = least_squares_slope(&pts);
    let n = pts.len() as f64;
    let intercept = pts.iter().map(|p| p.1 - slope * p.0).sum::<f64>() / n;
    Ok((slope, intercept.exp()))
}

/// One row of the discrete-versus-continuum comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n_modes: usize,
    pub z: f64,
    pub distance: f64,
}

/// Options of [`continuum_limit_check`].
#[derive(Debug, Clone)]
pub struct ContinuumCheck {
    pub bc: BoundaryCondition,
    /// Propagation distances in units of `1/a0`.
    pub z_values: Vec<f64>,
    /// Cells of the continuum reference solution.
    pub u_resolution: usize,
}

/// `T^N_φ(z, u) = Σ_j φ(j/N) T_j^{l}(z)` with `l = [Nu]` (clamped to `1..=N`)
/// against the continuum solution, in `L²(0, 1)`, for every waveguide in
/// `ladder`. The lossless case drops the radiative loss from the discrete
/// system.
pub fn continuum_limit_check(
    ladder: &[WaveguideParams],
    spec: &CovarianceSpec,
    phi: impl Fn(f64) -> f64 + Sync,
    opts: &ContinuumCheck,
) -> Result<Vec<ConvergenceRow>> {
    if !band_limited_check(spec, ProbeGrid::default())? {
        return Err(Error::KernelNotBandLimited);
    }
    let first = ladder
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty waveguide ladder".into()))?;
    let coeff = DiffusionCoefficient::from_medium(first, spec)?;
    let mut z_phys: Vec<f64> = opts.z_values.iter().map(|z| z / coeff.a0).collect();
    z_phys.sort_by(f64::total_cmp);
    let mut grid = vec![0.0];
    grid.extend(z_phys.iter().copied().filter(|&z| z > 0.0));
    let continuum = solve_diffusion(&coeff, &phi, opts.bc, &grid, opts.u_resolution)?;

    let per_n = ladder
        .par_iter()
        .map(|params| -> Result<Vec<ConvergenceRow>> {
            let modes = solve_modes(params)?;
            let n = modes.len();
            let mut system = PowerSystem::from_medium(&modes, spec)?;
            if opts.bc == BoundaryCondition::NeumannNeumann {
                system = system.with_loss(DVector::zeros(n))?;
            }
            let weights = DVector::from_fn(n, |j, _| phi((j + 1) as f64 / n as f64));
            let m = system.generator();
            opts.z_values
                .iter()
                .map(|&z_unit| {
                    let z = z_unit / coeff.a0;
                    // column l of T(z)ᵀ φ gives T^N_φ for starting mode l
                    let t = crate::power::expm_metzler(&(&m * z));
                    let discrete = t.transpose() * &weights;
                    let idx = grid.iter().position(|&g| g == z).unwrap_or(0);
                    let distance = l2_distance(discrete.as_slice(), |u| continuum.value_at(idx, u), continuum.u_grid.len());
                    Ok(ConvergenceRow {
                        n_modes: n,
                        z: z_unit,
                        distance,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_n.into_iter().flatten().collect())
}

/// `L²(0, 1)` distance between the step function `u ↦ d[clamp([Nu], 1, N) − 1]`
/// and `f`, integrating piecewise between the discrete and continuum breakpoints.
fn l2_distance(discrete: &[f64], f: impl Fn(f64) -> f64, cells: usize) -> f64 {
    let n = discrete.len();
    let mut breaks: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    breaks.extend((0..cells).map(|i| (i as f64 + 0.5) / cells as f64));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let rule = gauss_legendre(3);
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        let l = ((n as f64 * mid).floor() as usize).clamp(1, n);
        let v = discrete[l - 1];
        total += mapped(&rule, w[0], w[1]).map(|(u, wt)| wt * (v - f(u)).powi(2)).sum::<f64>();
    }
    total.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic() -> DiffusionCoefficient {
        DiffusionCoefficient::new(0.8, 0.6, 3.5).unwrap()
    }

    #[test]
    fn a_infinity_values() {
        let c = generic();
        assert_eq!(a_infinity(&c, 0.0).unwrap(), 0.8);
        let want = 0.8 / (1.0 - (1.0 - 3.5) * (0.6f64 * 0.3).powi(2));
        assert!((a_infinity(&c, 0.3).unwrap() - want).abs() < 1e-15);
        assert!(matches!(a_infinity(&c, 1.2), Err(Error::DomainError { .. })));
        let flat = DiffusionCoefficient::constant(2.0).unwrap();
        assert_eq!(a_infinity(&flat, 0.77).unwrap(), 2.0);
        assert!(DiffusionCoefficient::new(1.0, 0.9, -5.0).is_err());
        assert!(DiffusionCoefficient::new(1.0, 0.99, 1e-3).is_ok());
    }

    #[test]
    fn constant_state_is_steady_without_loss() {
        let c = generic();
        let s = solve_diffusion(&c, |_| 2.5, BoundaryCondition::NeumannNeumann, &[0.0, 0.5, 3.0], 64).unwrap();
        for row in &s.values {
            for v in row {
                assert!((v - 2.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cosine_mode_of_constant_coefficient() {
        let c = DiffusionCoefficient::constant(1.3).unwrap();
        let z = [0.0, 0.1, 0.4];
        let s = solve_diffusion(&c, |u| (PI * u / 2.0).cos(), BoundaryCondition::NeumannDirichlet, &z, 256).unwrap();
        for (m, &zz) in z.iter().enumerate() {
            let decay = (-1.3 * PI * PI * zz / 4.0).exp();
            for (i, &u) in s.u_grid.iter().enumerate() {
                let h = 1.0 / 256.0;
                // exact cell average of the decaying eigenmode
                let avg = decay * ((PI * (u + h / 2.0) / 2.0).sin() - (PI * (u - h / 2.0) / 2.0).sin()) * 2.0 / (PI * h);
                assert!((s.values[m][i] - avg).abs() < 2e-5, "z {zz} u {u}");
            }
        }
    }

    #[test]
    fn lossless_mass_is_conserved() {
        let s = solve_diffusion(
            &generic(),
            |u| if u < 0.5 { 1.0 } else { 0.0 },
            BoundaryCondition::NeumannNeumann,
            &[0.0, 0.01, 0.1, 1.0],
            128,
        )
        .unwrap();
        for m in 0..4 {
            assert!((s.mass(m) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_constant_coefficient() {
        let c = DiffusionCoefficient::constant(0.9).unwrap();
        let sp = sturm_liouville_spectrum(&c, BoundaryCondition::NeumannDirichlet, 3, 128).unwrap();
        for (i, v) in sp.eigenvalues.iter().enumerate() {
            let want = -0.9 * (PI * (i as f64 + 0.5)).powi(2);
            assert!((v - want).abs() < 1e-6 * want.abs(), "{i}: {v} vs {want}");
        }
        assert!(sp.eigenfunctions[0].iter().all(|&v| v > 0.0));
        let norm: f64 = sp.eigenfunctions[0].iter().map(|v| v * v).sum::<f64>() / 128.0;
        assert!((norm - 1.0).abs() < 1e-12);
        let ll = sturm_liouville_spectrum(&generic(), BoundaryCondition::NeumannNeumann, 2, 64).unwrap();
        assert_eq!(ll.eigenvalues[0], 0.0);
        assert!(ll.eigenvalues[1] < 0.0);
        assert!(sturm_liouville_spectrum(&c, BoundaryCondition::NeumannNeumann, 20, 64).is_err());
    }

    #[test]
    fn step_initial_data_stays_nonnegative() {
        let s = solve_diffusion(
            &generic(),
            |u| if u <= 0.5 { 1.0 } else { 0.0 },
            BoundaryCondition::NeumannDirichlet,
            &[0.0, 1e-4, 1e-3, 0.05, 0.5],
            256,
        )
        .unwrap();
        for row in &s.values {
            assert!(row.iter().all(|&v| v >= -1e-8 && v <= 1.0 + 1e-8));
        }
    }

    #[test]
    fn l2_distance_of_matching_step() {
        // mode l covers [l/N, (l+1)/N), mode N only the point u = 1
        let d = l2_distance(&[1.0, 2.0, 3.0], |u| if u < 2.0 / 3.0 { 1.0 } else { 2.0 }, 64);
        assert!(d < 1e-14);
        // the lowest sub-interval [0, 1/N) reads mode 1
        let d = l2_distance(&[0.0, 0.0, 0.0], |_| 1.0, 64);
        assert!((d - 1.0).abs() < 1e-14);
    }
}
