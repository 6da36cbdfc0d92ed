//! Coupled power equations `dT/dz = (Γ^c − diag Λ^c) T`, `T(0) = I`, and the
//! decay law of the mean mode amplitudes.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::coupling::{gamma_c_matrix, lambda_c_vector, overlap_discrete, CouplingCoefficients};
use crate::medium::CovarianceSpec;
use crate::pekeris::ModeSet;
use crate::{Error, Result};

/// Transport matrix and loss vector of the power equations.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystem {
    transport: DMatrix<f64>,
    loss: DVector<f64>,
}

impl PowerSystem {
    /// Validates shapes and signs. The diagonal of `transport` is replaced by
    /// minus the off-diagonal row sum.
    pub fn new(transport: DMatrix<f64>, loss: DVector<f64>) -> Result<Self> {
        let n = transport.nrows();
        if !transport.is_square() || loss.len() != n {
            return Err(Error::NonSquareCoefficients(format!(
                "transport {}×{}, loss {}",
                transport.nrows(),
                transport.ncols(),
                loss.len()
            )));
        }
        if n == 0 {
            return Err(Error::NonSquareCoefficients("empty system".into()));
        }
        for (j, &v) in loss.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::NegativeLambda { index: j + 1, value: v });
            }
        }
        let mut t = transport;
        for j in 0..n {
            let mut s = 0.0;
            for l in 0..n {
                if j != l {
                    let v = t[(j, l)];
                    if !(v >= 0.0) || !v.is_finite() {
                        return Err(Error::NegativeTransfer {
                            row: j + 1,
                            col: l + 1,
                            value: v,
                        });
                    }
                    s += v;
                }
            }
            t[(j, j)] = -s;
        }
        Ok(PowerSystem { transport: t, loss })
    }

    pub fn from_coefficients(c: &CouplingCoefficients) -> Result<Self> {
        Self::new(c.gamma_c.clone(), c.lambda_c.clone())
    }

    /// Computes only `Γ^c` and `Λ^c`, which is all the power equations need.
    pub fn from_medium(modes: &ModeSet, spec: &CovarianceSpec) -> Result<Self> {
        let overlap = overlap_discrete(modes, spec)?;
        Self::new(gamma_c_matrix(&overlap, modes, spec), lambda_c_vector(modes, spec)?)
    }

    pub fn len(&self) -> usize {
        self.loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss.is_empty()
    }

    pub fn transport(&self) -> &DMatrix<f64> {
        &self.transport
    }

    pub fn loss(&self) -> &DVector<f64> {
        &self.loss
    }

    /// Multiplies the transport matrix by `coupling` and the loss by `loss`.
    pub fn rescaled(&self, coupling: f64, loss: f64) -> Result<Self> {
        Self::new(&self.transport * coupling, &self.loss * loss)
    }

    /// Same transport matrix with a different loss vector.
    pub fn with_loss(&self, loss: DVector<f64>) -> Result<Self> {
        Self::new(self.transport.clone(), loss)
    }

    /// `M = Γ^c − diag(Λ^c)`.
    pub fn generator(&self) -> DMatrix<f64> {
        let mut m = self.transport.clone();
        for j in 0..self.len() {
            m[(j, j)] -= self.loss[j];
        }
        m
    }

    /// `exp(zM)`.
    pub fn propagator(&self, z: f64) -> DMatrix<f64> {
        expm_metzler(&(self.generator() * z))
    }
}

/// Matrix exponential of a matrix with nonnegative off-diagonal entries.
///
/// With `c = max(−A_jj, 0)` the shifted matrix `B = A + cI` is entrywise
/// nonnegative, so every term of the Taylor series of `exp(B/2^s)` is
/// nonnegative, and so are the squarings: no cancellation occurs and the result
/// is nonnegative by construction.
pub fn expm_metzler(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let c = (0..n).map(|j| -a[(j, j)]).fold(0.0_f64, f64::max);
    let mut b = a.clone();
    for j in 0..n {
        b[(j, j)] += c;
    }
    let norm = (0..n)
        .map(|j| b.row(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let b = b / 2f64.powi(s);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..40 {
        term = &term * &b / k as f64;
        sum += &term;
        if term.amax() <= 1e-18 * sum.amax() {
            break;
        }
    }
    let mut e = sum * (-c / 2f64.powi(s)).exp();
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

/// Sampled solution `T[m][(j, l)] = T_j^l(z_m)` (0-based indices).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrajectory {
    pub z_grid: Vec<f64>,
    pub t: Vec<DMatrix<f64>>,
}

fn check_grid(z_grid: &[f64]) -> Result<()> {
    if z_grid.first() != Some(&0.0) {
        return Err(Error::InvalidGrid("z grid must start at 0".into()));
    }
    if z_grid.iter().any(|z| !z.is_finite()) || z_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("z grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

fn assert_nonnegative(t: &DMatrix<f64>, z: f64, floor: f64) -> Result<()> {
    for j in 0..t.nrows() {
        for l in 0..t.ncols() {
            if t[(j, l)] < floor || t[(j, l)].is_nan() {
                return Err(Error::NegativePower {
                    row: j + 1,
                    col: l + 1,
                    value: t[(j, l)],
                    z,
                });
            }
        }
    }
    Ok(())
}

/// Primary solver: a nonnegative matrix exponential at every grid point.
pub fn solve_coupled_power(system: &PowerSystem, z_grid: &[f64]) -> Result<PowerTrajectory> {
    check_grid(z_grid)?;
    let m = system.generator();
    let t = z_grid
        .iter()
        .map(|&z| {
            let e = expm_metzler(&(&m * z));
            assert_nonnegative(&e, z, 0.0)?;
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerTrajectory {
        z_grid: z_grid.to_vec(),
        t,
    })
}

/// Tolerances of the Dormand–Prince verification solver.
#[derive(Debug, Clone, Copy)]
pub struct RkTolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for RkTolerance {
    fn default() -> Self {
        RkTolerance { rtol: 1e-10, atol: 1e-12 }
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Verification solver: adaptive Dormand–Prince on the matrix ODE, stepping
/// exactly onto every grid point.
pub fn solve_coupled_power_rk(system: &PowerSystem, z_grid: &[f64], tol: RkTolerance) -> Result<PowerTrajectory> {
    check_grid(z_grid)?;
    let m = system.generator();
    let n = system.len();
    let rate = m.amax().max(f64::MIN_POSITIVE);
    let mut y = DMatrix::identity(n, n);
    let mut z = 0.0;
    let mut h = 0.01 / rate;
    let mut out = vec![y.clone()];
    let mut k: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); 7];
    for &target in &z_grid[1..] {
        while z < target {
            let last = z + h >= target;
            let step = if last { target - z } else { h };
            k[0] = &m * &y;
            for s in 1..7 {
                let mut yi = y.clone();
                for (r, kr) in k.iter().enumerate().take(s) {
                    if A[s][r] != 0.0 {
                        yi += kr * (step * A[s][r]);
                    }
                }
                k[s] = &m * yi;
            }
            let mut y5 = y.clone();
            let mut err = DMatrix::zeros(n, n);
            for s in 0..7 {
                y5 += &k[s] * (step * B5[s]);
                err += &k[s] * (step * (B5[s] - B4[s]));
            }
            let mut e: f64 = 0.0;
            for i in 0..n * n {
                let sc = tol.atol + tol.rtol * y[i].abs().max(y5[i].abs());
                e = e.max(err[i].abs() / sc);
            }
            if e <= 1.0 {
                z = if last { target } else { z + step };
                y = y5;
            }
            let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            if !last || e > 1.0 {
                h = step * factor;
            }
            if h < 1e-14 * target.max(1.0) / rate.max(1.0) {
                return Err(Error::InvalidGrid(format!("step size underflow at z = {z}")));
            }
        }
        assert_nonnegative(&y, target, -10.0 * tol.atol)?;
        out.push(y.clone());
    }
    Ok(PowerTrajectory {
        z_grid: z_grid.to_vec(),
        t: out,
    })
}

impl PowerTrajectory {
    pub fn len(&self) -> usize {
        self.z_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_grid.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.t.first().map_or(0, |m| m.nrows())
    }

    /// Largest entrywise difference between two trajectories on the same
    /// grid, relative to the largest entry of `self` at each grid point.
    pub fn max_relative_difference(&self, other: &PowerTrajectory) -> f64 {
        self.t
            .iter()
            .zip(&other.t)
            .map(|(a, b)| (a - b).amax() / a.amax().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    /// Writes `z,j,l,T` rows with 1-based mode indices.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "z,j,l,T")?;
        for (z, m) in self.z_grid.iter().zip(&self.t) {
            for l in 0..m.ncols() {
                for j in 0..m.nrows() {
                    writeln!(w, "{z:e},{},{},{:e}", j + 1, l + 1, m[(j, l)])?;
                }
            }
        }
        Ok(())
    }
}

/// `Σ_j T_j^l(z_m)` for every grid point; `l` is 1-based.
pub fn total_energy(traj: &PowerTrajectory, l: usize) -> Result<Vec<f64>> {
    let n = traj.modes();
    if l == 0 || l > n {
        return Err(Error::IndexOutOfRange { index: l, len: n });
    }
    Ok(traj.t.iter().map(|m| m.column(l - 1).sum()).collect())
}

/// Mean amplitude of mode `j` (1-based) after propagating a distance `z`.
pub fn mean_amplitude_decay(coeffs: &CouplingCoefficients, j: usize, z: f64) -> Result<Complex64> {
    let n = coeffs.len();
    if j == 0 || j > n {
        return Err(Error::IndexOutOfRange { index: j, len: n });
    }
    let i = j - 1;
    let re = (coeffs.gamma_c[(i, i)] - coeffs.gamma_1[(i, i)] - coeffs.lambda_c[i]) / 2.0;
    let im = (coeffs.gamma_s[(i, i)] - coeffs.lambda_s[i]) / 2.0 + coeffs.kappa.values[i];
    Ok((Complex64::new(re, im) * z).exp())
}
