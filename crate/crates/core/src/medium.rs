//! Statistics of the random inhomogeneities: the transverse covariance kernel
//! `γ0(x, y)` on `[0, d]²` and the longitudinal correlation rate `a`
//! (longitudinal covariance `e^{−a|z|}`).
//!
//! Every supported kernel admits a finite expansion
//! `γ0(x, y) = Σ_rs W_rs b_r(x) b_s(y)` with symmetric `W`, so the spectral
//! integral `S(v1, v2) = ∫∫ γ0 cos(v1 x/d) cos(v2 y/d)` reduces to
//! `t(v1)ᵀ W t(v2)` with one-dimensional transforms `t_r(v) = ∫ b_r cos(v x/d)`.
//! Named families are separable (diagonal `W`), tabulated kernels use the
//! hat-function basis of bilinear interpolation.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::quadrature::{gauss_legendre, mapped};
use crate::{Error, Result};

/// Relative doubling tolerance of the Gauss–Legendre transforms.
const TRANSFORM_REL_TOL: f64 = 1e-13;
const MAX_GL_ORDER: usize = 16384;
/// Above this value of `width·ω` the Gaussian transform switches to the
/// boundary expansion (interior contribution below `e^{-50}`).
const GAUSSIAN_ASYMPTOTIC_THRESHOLD: f64 = 10.0;

/// Spectral cutoff used by the band-limited idealisation.
pub const BAND_LIMIT: f64 = 1.5 * PI;

/// Named or tabulated transverse covariance kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Zero,
    /// `γ0 ≡ value`.
    Constant { value: f64 },
    /// `γ0 = amplitude · cos(πx/d) cos(πy/d)`.
    CosineBand { amplitude: f64 },
    /// `γ0 = amplitude · g(x) g(y)`, `g(x) = exp(−(x − center)² / (2 width²))`.
    GaussianBump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// Superposition of kernels.
    Sum(Vec<Kernel>),
    /// Grid values with bilinear interpolation.
    Table(KernelTable),
}

/// Tabulated kernel on a tensor grid `coords × coords` covering `[0, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub coords: Vec<f64>,
    /// Row-major values, `values[i * n + j] = γ0(coords[i], coords[j])`.
    pub values: Vec<f64>,
}

impl KernelTable {
    pub fn new(coords: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = coords.len();
        if n < 2 {
            return Err(Error::InvalidParameter("kernel table needs at least 2 grid points".into()));
        }
        if values.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "kernel table has {} values for a {n}×{n} grid",
                values.len()
            )));
        }
        if coords.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("kernel table coordinates must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("kernel table contains non-finite values".into()));
        }
        Ok(KernelTable { coords, values })
    }

    /// Reads the CSV layout `x,y,value` (header row, x-major rows, both
    /// coordinate axes strictly increasing and identical).
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::KernelTable {
            line: 1,
            message: "empty file".into(),
        })?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols != ["x", "y", "value"] {
            return Err(Error::KernelTable {
                line: hline + 1,
                message: format!("expected header `x,y,value`, found `{}`", header.trim()),
            });
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::KernelTable {
                    line: i + 1,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let mut parsed = [0.0; 3];
            for (p, f) in parsed.iter_mut().zip(&fields) {
                *p = f.parse().map_err(|_| Error::KernelTable {
                    line: i + 1,
                    message: format!("cannot parse `{f}` as a number"),
                })?;
            }
            rows.push((i + 1, parsed));
        }
        let first_x = rows.first().map(|r| r.1[0]).ok_or(Error::KernelTable {
            line: hline + 1,
            message: "no data rows".into(),
        })?;
        let ys: Vec<f64> = rows.iter().take_while(|r| r.1[0] == first_x).map(|r| r.1[1]).collect();
        let ny = ys.len();
        if rows.len() % ny != 0 {
            return Err(Error::KernelTable {
                line: rows.last().map_or(1, |r| r.0),
                message: format!("{} rows do not form a grid with {ny} y values", rows.len()),
            });
        }
        let mut xs = Vec::with_capacity(rows.len() / ny);
        for (r, (line, [x, y, _])) in rows.iter().enumerate() {
            if r % ny == 0 {
                if let Some(&prev) = xs.last() {
                    if !(*x > prev) {
                        return Err(Error::KernelTable {
                            line: *line,
                            message: format!("x = {x} is not strictly increasing"),
                        });
                    }
                }
                xs.push(*x);
            } else if *x != xs[xs.len() - 1] {
                return Err(Error::KernelTable {
                    line: *line,
                    message: format!("expected x = {}, found {x}", xs[xs.len() - 1]),
                });
            }
            if *y != ys[r % ny] {
                return Err(Error::KernelTable {
                    line: *line,
                    message: format!("expected y = {}, found {y}", ys[r % ny]),
                });
            }
        }
        if xs != ys {
            return Err(Error::KernelTable {
                line: hline + 1,
                message: "x and y grids must coincide".into(),
            });
        }
        let values = rows.iter().map(|r| r.1[2]).collect();
        KernelTable::new(xs, values)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::KernelTable {
            line: 0,
            message: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::from_csv_str(&text)
    }

    fn matrix(&self) -> DMatrix<f64> {
        let n = self.coords.len();
        DMatrix::from_row_slice(n, n, &self.values)
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let (i, tx) = locate(&self.coords, x);
        let (j, ty) = locate(&self.coords, y);
        let n = self.coords.len();
        let v = |a: usize, b: usize| self.values[a * n + b];
        (1.0 - tx) * (1.0 - ty) * v(i, j)
            + tx * (1.0 - ty) * v(i + 1, j)
            + (1.0 - tx) * ty * v(i, j + 1)
            + tx * ty * v(i + 1, j + 1)
    }
}

fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let n = grid.len();
    let x = x.clamp(grid[0], grid[n - 1]);
    let i = grid.partition_point(|&g| g <= x).clamp(1, n - 1) - 1;
    (i, (x - grid[i]) / (grid[i + 1] - grid[i]))
}

impl Kernel {
    /// Multiplies the kernel by `c`.
    pub fn scaled(&self, c: f64) -> Kernel {
        match self {
            Kernel::Zero => Kernel::Zero,
            Kernel::Constant { value } => Kernel::Constant { value: c * value },
            Kernel::CosineBand { amplitude } => Kernel::CosineBand { amplitude: c * amplitude },
            Kernel::GaussianBump {
                amplitude,
                center,
                width,
            } => Kernel::GaussianBump {
                amplitude: c * amplitude,
                center: *center,
                width: *width,
            },
            Kernel::Sum(parts) => Kernel::Sum(parts.iter().map(|k| k.scaled(c)).collect()),
            Kernel::Table(t) => Kernel::Table(KernelTable {
                coords: t.coords.clone(),
                values: t.values.iter().map(|v| c * v).collect(),
            }),
        }
    }

    /// Pointwise value `γ0(x, y)`.
    pub fn eval(&self, x: f64, y: f64, d: f64) -> f64 {
        match self {
            Kernel::Zero => 0.0,
            Kernel::Constant { value } => *value,
            Kernel::CosineBand { amplitude } => amplitude * (PI * x / d).cos() * (PI * y / d).cos(),
            Kernel::GaussianBump {
                amplitude,
                center,
                width,
            } => {
                let g = |t: f64| (-(t - center).powi(2) / (2.0 * width * width)).exp();
                amplitude * g(x) * g(y)
            }
            Kernel::Sum(parts) => parts.iter().map(|k| k.eval(x, y, d)).sum(),
            Kernel::Table(t) => t.eval(x, y),
        }
    }

    fn validate(&self, d: f64) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite and ≥ 0, got {v}")))
            }
        };
        match self {
            Kernel::Zero => Ok(()),
            Kernel::Constant { value } => nonneg("constant kernel value", *value),
            Kernel::CosineBand { amplitude } => nonneg("cosine-band amplitude", *amplitude),
            Kernel::GaussianBump {
                amplitude,
                center,
                width,
            } => {
                nonneg("gaussian-bump amplitude", *amplitude)?;
                if !center.is_finite() {
                    return Err(Error::InvalidParameter(format!("gaussian-bump center {center}")));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return Err(Error::InvalidParameter(format!("gaussian-bump width must be > 0, got {width}")));
                }
                Ok(())
            }
            Kernel::Sum(parts) => parts.iter().try_for_each(|k| k.validate(d)),
            Kernel::Table(t) => {
                let n = t.coords.len();
                let tol = 1e-9 * d;
                if t.coords[0].abs() > tol || (t.coords[n - 1] - d).abs() > tol {
                    return Err(Error::InvalidParameter(format!(
                        "kernel table must cover [0, {d}], covers [{}, {}]",
                        t.coords[0],
                        t.coords[n - 1]
                    )));
                }
                let k = t.matrix();
                let scale = k.amax();
                let asym = (&k - k.transpose()).amax();
                if asym > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::KernelNotSymmetric(format!("max |γ0(x,y) − γ0(y,x)| = {asym:e}")));
                }
                let eig = SymmetricEigen::new(k).eigenvalues;
                let min = eig.min();
                let max = eig.max();
                if min < -1e-10 * max.abs().max(f64::MIN_POSITIVE) {
                    return Err(Error::KernelNotPositiveSemidefinite { min_eig: min, max_eig: max });
                }
                Ok(())
            }
        }
    }

    fn collect_basis(&self, d: f64, out: &mut Vec<Block>) {
        match self {
            Kernel::Zero => {}
            Kernel::Constant { value } => out.push(Block::Rank1(*value, Factor::Constant)),
            Kernel::CosineBand { amplitude } => out.push(Block::Rank1(*amplitude, Factor::Cosine)),
            Kernel::GaussianBump {
                amplitude,
                center,
                width,
            } => out.push(Block::Rank1(
                *amplitude,
                Factor::Gaussian {
                    center: *center,
                    width: *width,
                },
            )),
            Kernel::Sum(parts) => parts.iter().for_each(|k| k.collect_basis(d, out)),
            Kernel::Table(t) => out.push(Block::Table {
                coords: t.coords.clone(),
                matrix: t.matrix(),
            }),
        }
    }
}

/// One-dimensional basis function of a separable term.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Factor {
    Constant,
    Cosine,
    Gaussian { center: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum Block {
    Rank1(f64, Factor),
    Table { coords: Vec<f64>, matrix: DMatrix<f64> },
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

impl Factor {
    fn value(&self, x: f64, d: f64) -> f64 {
        match *self {
            Factor::Constant => 1.0,
            Factor::Cosine => (PI * x / d).cos(),
            Factor::Gaussian { center, width } => (-(x - center).powi(2) / (2.0 * width * width)).exp(),
        }
    }

    /// `∫₀^d b(x) cos(v x/d) dx`.
    fn transform(&self, v: f64, d: f64) -> Result<f64> {
        let v = v.abs();
        match *self {
            Factor::Constant => Ok(d * sinc(v)),
            Factor::Cosine => Ok(0.5 * d * (sinc(v - PI) + sinc(v + PI))),
            Factor::Gaussian { center, width } => {
                if width * v / d >= GAUSSIAN_ASYMPTOTIC_THRESHOLD {
                    Ok(gaussian_transform_asymptotic(center, width, v / d, d))
                } else {
                    gl_transform(|x| self.value(x, d), v, d)
                }
            }
        }
    }
}

/// Gauss–Legendre cosine transform with order doubling.
fn gl_transform(f: impl Fn(f64) -> f64, v: f64, d: f64) -> Result<f64> {
    let base = ((v / 2.0).ceil() as usize + 16).next_power_of_two();
    let eval = |order: usize| {
        let rule = gauss_legendre(order);
        mapped(&rule, 0.0, d).fold((0.0, 0.0), |(s, l1), (x, w)| {
            let t = w * f(x) * (v * x / d).cos();
            (s + t, l1 + t.abs())
        })
    };
    let mut order = base;
    let (mut prev, _) = eval(order);
    while order < MAX_GL_ORDER {
        order *= 2;
        let (cur, l1) = eval(order);
        // summation roundoff grows like ε√n relative to the L¹ sum
        if (cur - prev).abs() <= TRANSFORM_REL_TOL * cur.abs() + 1e-14 * l1 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::QuadratureNotConverged(format!(
        "cosine transform at v = {v} did not settle by order {MAX_GL_ORDER}"
    )))
}

/// `Re ∫₀^d g(x) e^{iωx} dx` for a Gaussian `g`, as the full-line transform
/// minus the two half-line tails, the tails expanded in boundary derivatives.
fn gaussian_transform_asymptotic(center: f64, width: f64, omega: f64, d: f64) -> f64 {
    let full = Complex64::from_polar(
        width * (2.0 * PI).sqrt() * (-0.5 * omega * omega * width * width).exp(),
        omega * center,
    );
    let scale = 1.0 / (width * std::f64::consts::SQRT_2);
    // Σ_m (−1)^m g^{(m)}(x0) / (iω)^{m+1}, truncated at the smallest term.
    let r = scale / omega;
    let boundary_series = |x0: f64| -> Complex64 {
        let s = (x0 - center) * scale;
        let e = (-s * s).exp() / omega;
        // q_m = H_m(s)·(scale/ω)^m, so that the m-th term is (−i)^{m+1} q_m e
        let mut q_prev = 1.0;
        let mut q = 2.0 * s * r;
        let mut phase = Complex64::new(0.0, -1.0);
        let mut sum = phase * e;
        let mut small = 0;
        // terms shrink until m ≈ (width·ω)², where they bottom out near e^{−(width·ω)²/2}
        let m_max = ((width * omega).powi(2) as usize).clamp(8, 300);
        for m in 1..m_max {
            phase *= Complex64::new(0.0, -1.0);
            let term = phase * (q * e);
            sum += term;
            if term.norm() <= 1e-17 * sum.norm() {
                small += 1;
                if small == 3 {
                    break;
                }
            } else {
                small = 0;
            }
            let next = 2.0 * s * r * q - 2.0 * m as f64 * r * r * q_prev;
            q_prev = q;
            q = next;
        }
        sum
    };
    let left = boundary_series(0.0);
    let right = boundary_series(d) * Complex64::from_polar(1.0, omega * d);
    (full - (left - right)).re
}

/// Random-medium statistics: transverse kernel plus longitudinal rate `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    kernel: Kernel,
    a: f64,
    d: f64,
    spectral_cutoff: Option<f64>,
    basis: Vec<Block>,
}

impl CovarianceSpec {
    /// Validates the kernel. Named families with nonnegative amplitudes are
    /// positive semidefinite by construction; tables are checked through the
    /// eigenvalues of their grid matrix. The cosine-band family carries the
    /// band-limiting cutoff [`BAND_LIMIT`] by default.
    pub fn new(kernel: Kernel, a: f64, d: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParameter(format!("correlation rate a must be > 0, got {a}")));
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidParameter(format!("depth d must be > 0, got {d}")));
        }
        kernel.validate(d)?;
        let cutoff = matches!(kernel, Kernel::CosineBand { .. }).then_some(BAND_LIMIT);
        let mut basis = Vec::new();
        kernel.collect_basis(d, &mut basis);
        Ok(CovarianceSpec {
            kernel,
            a,
            d,
            spectral_cutoff: cutoff,
            basis,
        })
    }

    /// Overrides the spectral cutoff: `S(v1, v2) = 0` whenever
    /// `max(|v1|, |v2|)` exceeds it.
    pub fn with_spectral_cutoff(mut self, cutoff: Option<f64>) -> Result<Self> {
        if let Some(c) = cutoff {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidParameter(format!("spectral cutoff must be > 0, got {c}")));
            }
        }
        self.spectral_cutoff = cutoff;
        Ok(self)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn spectral_cutoff(&self) -> Option<f64> {
        self.spectral_cutoff
    }

    pub fn gamma0(&self, x: f64, y: f64) -> f64 {
        self.kernel.eval(x, y, self.d)
    }

    fn outside_band(&self, v1: f64, v2: f64) -> bool {
        self.spectral_cutoff
            .is_some_and(|c| v1.abs().max(v2.abs()) > c)
    }

    /// Transform vectors of every basis block at `v`.
    pub fn transforms(&self, v: f64) -> Result<Transforms> {
        let mut blocks = Vec::with_capacity(self.basis.len());
        for b in &self.basis {
            blocks.push(match b {
                Block::Rank1(_, f) => DVector::from_element(1, f.transform(v, self.d)?),
                Block::Table { coords, .. } => hat_transforms(coords, v / self.d),
            });
        }
        Ok(Transforms { v, blocks })
    }

    /// `S` from precomputed transforms, applying the spectral cutoff.
    pub fn s_from(&self, t1: &Transforms, t2: &Transforms) -> f64 {
        if self.outside_band(t1.v, t2.v) {
            return 0.0;
        }
        self.basis
            .iter()
            .zip(t1.blocks.iter().zip(&t2.blocks))
            .map(|(b, (p, q))| match b {
                Block::Rank1(w, _) => w * p[0] * q[0],
                Block::Table { matrix, .. } => p.dot(&(matrix * q)),
            })
            .sum()
    }

    /// `S(v1, v2) = ∫₀^d∫₀^d γ0(x1, x2) cos(v1 x1/d) cos(v2 x2/d) dx1 dx2`.
    pub fn eval_s(&self, v1: f64, v2: f64) -> Result<f64> {
        if self.outside_band(v1, v2) || self.basis.is_empty() {
            return Ok(0.0);
        }
        Ok(self.s_from(&self.transforms(v1)?, &self.transforms(v2)?))
    }

    /// The four-term combination
    /// `S(p,p) + S(q,q) − S(p,q) − S(q,p)` that appears in every overlap integral.
    pub fn s_difference(&self, p: f64, q: f64) -> Result<f64> {
        if self.basis.is_empty() {
            return Ok(0.0);
        }
        let cutoff_hits = [(p, p), (q, q), (p, q), (q, p)]
            .iter()
            .all(|&(a, b)| self.outside_band(a, b));
        if cutoff_hits {
            return Ok(0.0);
        }
        let tp = self.transforms(p)?;
        let tq = self.transforms(q)?;
        Ok(self.s_from(&tp, &tp) + self.s_from(&tq, &tq) - self.s_from(&tp, &tq) - self.s_from(&tq, &tp))
    }
}

/// Per-block cosine transforms at one spectral value.
#[derive(Debug, Clone)]
pub struct Transforms {
    v: f64,
    blocks: Vec<DVector<f64>>,
}

/// `∫ hat_i(x) cos(ωx) dx` for every node of the grid.
fn hat_transforms(coords: &[f64], omega: f64) -> DVector<f64> {
    let n = coords.len();
    let mut out = DVector::zeros(n);
    let rule = gauss_legendre(10);
    for k in 0..n - 1 {
        let (x0, x1) = (coords[k], coords[k + 1]);
        let h = x1 - x0;
        // `down` weights the node x0 (1 at x0, 0 at x1), `up` the node x1.
        let (down, up) = if (omega * h).abs() < 0.5 {
            mapped(&rule, x0, x1).fold((0.0, 0.0), |(a, b), (x, w)| {
                let c = w * (omega * x).cos();
                (a + c * (x1 - x) / h, b + c * (x - x0) / h)
            })
        } else {
            let (s0, c0) = (omega * x0).sin_cos();
            let (s1, c1) = (omega * x1).sin_cos();
            let w2 = omega * omega;
            let down = -h * s0 / omega + (c0 - c1) / w2;
            let up = h * s1 / omega + (c1 - c0) / w2;
            (down / h, up / h)
        };
        out[k] += down;
        out[k + 1] += up;
    }
    out
}

/// Probe lattice `{0, Δ, 2Δ, …} ∩ [0, max]` in both spectral variables.
#[derive(Debug, Clone, Copy)]
pub struct ProbeGrid {
    pub max: f64,
    pub spacing: f64,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        ProbeGrid {
            max: 3.0 * PI,
            spacing: PI / 8.0,
        }
    }
}

/// True when `|S| ≤ 1e−9 · peak` on every probe with `max(|v1|,|v2|) > 3π/2`,
/// where `peak` is the largest `|S|` over the probe lattice.
pub fn band_limited_check(spec: &CovarianceSpec, probes: ProbeGrid) -> Result<bool> {
    if probes.max < 3.0 * PI * (1.0 - 1e-12) || probes.spacing > PI / 8.0 * (1.0 + 1e-12) || probes.spacing <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "probe grid must cover [0, 3π] with spacing ≤ π/8, got max {} spacing {}",
            probes.max, probes.spacing
        )));
    }
    let count = (probes.max / probes.spacing).floor() as usize + 1;
    let vs: Vec<f64> = (0..count).map(|i| i as f64 * probes.spacing).collect();
    let transforms = vs.iter().map(|&v| spec.transforms(v)).collect::<Result<Vec<_>>>()?;
    let mut peak: f64 = 0.0;
    let mut outside: f64 = 0.0;
    for (i, t1) in transforms.iter().enumerate() {
        for (j, t2) in transforms.iter().enumerate() {
            let s = spec.s_from(t1, t2).abs();
            peak = peak.max(s);
            if vs[i].max(vs[j]) > BAND_LIMIT {
                outside = outside.max(s);
            }
        }
    }
    Ok(outside <= 1e-9 * peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_fixed;

    fn spec(kernel: Kernel) -> CovarianceSpec {
        CovarianceSpec::new(kernel, 1.5, 2.0).unwrap()
    }

    /// Brute-force tensor Gauss–Legendre of the pointwise kernel.
    fn brute_s(spec: &CovarianceSpec, v1: f64, v2: f64, order: usize) -> f64 {
        let d = spec.d();
        integrate_fixed(
            |x| {
                integrate_fixed(|y| spec.gamma0(x, y) * (v1 * x / d).cos() * (v2 * y / d).cos(), 0.0, d, order)
            },
            0.0,
            d,
            order,
        )
    }

    #[test]
    fn zero_and_constant_kernels() {
        let z = spec(Kernel::Zero);
        assert_eq!(z.eval_s(1.3, 4.0).unwrap(), 0.0);
        let c = spec(Kernel::Constant { value: 0.7 });
        assert!((c.eval_s(0.0, 0.0).unwrap() - 0.7 * 4.0).abs() < 1e-14);
    }

    #[test]
    fn cosine_kernel_at_pi() {
        let s = CovarianceSpec::new(Kernel::CosineBand { amplitude: 1.0 }, 1.0, 3.0).unwrap();
        // ∫₀^d cos²(πx/d) dx = d/2
        assert!((s.eval_s(PI, PI).unwrap() - 2.25).abs() < 1e-13);
        assert!((s.eval_s(-PI, PI).unwrap() - 2.25).abs() < 1e-13);
    }

    #[test]
    fn transforms_match_brute_force() {
        let k = Kernel::Sum(vec![
            Kernel::Constant { value: 0.3 },
            Kernel::GaussianBump {
                amplitude: 1.2,
                center: 0.7,
                width: 0.25,
            },
        ]);
        let s = spec(k);
        for &(v1, v2) in &[(0.0, 0.0), (1.0, 2.5), (7.3, -3.1), (20.0, 13.0)] {
            let b = brute_s(&s, v1, v2, 200);
            assert!((s.eval_s(v1, v2).unwrap() - b).abs() < 1e-10 * (1.0 + b.abs()), "{v1} {v2}");
        }
    }

    #[test]
    fn gaussian_asymptotic_branch_matches_quadrature() {
        let f = Factor::Gaussian {
            center: 0.8,
            width: 0.2,
        };
        let d = 2.0;
        for &v in &[110.0, 160.0, 250.0, 400.0] {
            let direct = gl_transform(|x| f.value(x, d), v, d).unwrap();
            let asym = gaussian_transform_asymptotic(0.8, 0.2, v / d, d);
            assert!((direct - asym).abs() < 1e-13, "v = {v}: {direct} vs {asym}");
        }
    }

    #[test]
    fn table_kernel_matches_brute_force_and_pointwise() {
        let coords: Vec<f64> = (0..=20).map(|i| 2.0 * i as f64 / 20.0).collect();
        let n = coords.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = (-(coords[i] - coords[j]).powi(2)).exp();
            }
        }
        let s = spec(Kernel::Table(KernelTable::new(coords.clone(), values).unwrap()));
        assert!((s.gamma0(coords[3], coords[7]) - (-(coords[3] - coords[7]).powi(2)).exp()).abs() < 1e-15);
        // brute force over each cell to respect the interpolation kinks
        let d = 2.0;
        for &(v1, v2) in &[(0.0, 0.0), (2.0, 5.0), (31.0, 9.0)] {
            let mut b = 0.0;
            for a in 0..n - 1 {
                for c in 0..n - 1 {
                    b += integrate_fixed(
                        |x| {
                            integrate_fixed(
                                |y| s.gamma0(x, y) * (v1 * x / d).cos() * (v2 * y / d).cos(),
                                coords[c],
                                coords[c + 1],
                                12,
                            )
                        },
                        coords[a],
                        coords[a + 1],
                        12,
                    );
                }
            }
            assert!((s.eval_s(v1, v2).unwrap() - b).abs() < 1e-11, "{v1} {v2}");
        }
    }

    #[test]
    fn table_csv_parsing_and_validation() {
        let text = "x,y,value\n0,0,1\n0,1,0.5\n1,0,0.5\n1,1,1\n";
        let t = KernelTable::from_csv_str(text).unwrap();
        assert_eq!(t.coords, vec![0.0, 1.0]);
        assert!(CovarianceSpec::new(Kernel::Table(t), 1.0, 1.0).is_ok());

        let bad_header = "a,b,c\n0,0,1\n";
        assert!(matches!(
            KernelTable::from_csv_str(bad_header),
            Err(Error::KernelTable { line: 1, .. })
        ));
        let bad_num = "x,y,value\n0,0,1\n0,1,oops\n";
        assert!(matches!(
            KernelTable::from_csv_str(bad_num),
            Err(Error::KernelTable { line: 3, .. })
        ));
        let not_psd = "x,y,value\n0,0,1\n0,1,2\n1,0,2\n1,1,1\n";
        let t = KernelTable::from_csv_str(not_psd).unwrap();
        assert!(matches!(
            CovarianceSpec::new(Kernel::Table(t), 1.0, 1.0),
            Err(Error::KernelNotPositiveSemidefinite { .. })
        ));
        let asym = "x,y,value\n0,0,1\n0,1,0.2\n1,0,0.5\n1,1,1\n";
        let t = KernelTable::from_csv_str(asym).unwrap();
        assert!(matches!(
            CovarianceSpec::new(Kernel::Table(t), 1.0, 1.0),
            Err(Error::KernelNotSymmetric(_))
        ));
    }

    #[test]
    fn s_is_symmetric_and_linear() {
        let ka = Kernel::GaussianBump {
            amplitude: 0.9,
            center: 1.1,
            width: 0.4,
        };
        let kb = Kernel::Constant { value: 0.25 };
        let alpha = 2.5;
        let sa = spec(ka.clone());
        let sb = spec(kb.clone());
        let sum = spec(Kernel::Sum(vec![ka.scaled(alpha), kb]));
        for &(v1, v2) in &[(0.3, 2.2), (5.0, 9.5), (14.0, 1.0)] {
            let x = sum.eval_s(v1, v2).unwrap();
            let y = sum.eval_s(v2, v1).unwrap();
            assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-300));
            let lin = alpha * sa.eval_s(v1, v2).unwrap() + sb.eval_s(v1, v2).unwrap();
            assert!((x - lin).abs() < 1e-12 * (1.0 + lin.abs()));
        }
    }

    #[test]
    fn band_limit_check() {
        let cos = CovarianceSpec::new(Kernel::CosineBand { amplitude: 1.0 }, 1.0, 1.0).unwrap();
        assert!(band_limited_check(&cos, ProbeGrid::default()).unwrap());
        let c = CovarianceSpec::new(Kernel::Constant { value: 1.0 }, 1.0, 1.0).unwrap();
        assert!(!band_limited_check(&c, ProbeGrid::default()).unwrap());
        let z = CovarianceSpec::new(Kernel::Zero, 1.0, 1.0).unwrap();
        assert!(band_limited_check(&z, ProbeGrid::default()).unwrap());
        // the same cosine kernel without the idealisation is not band limited
        let raw = cos.clone().with_spectral_cutoff(None).unwrap();
        assert!(!band_limited_check(&raw, ProbeGrid::default()).unwrap());
        let coarse = ProbeGrid {
            max: 3.0 * PI,
            spacing: PI / 4.0,
        };
        assert!(band_limited_check(&cos, coarse).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CovarianceSpec::new(Kernel::Zero, 0.0, 1.0).is_err());
        assert!(CovarianceSpec::new(Kernel::Constant { value: -1.0 }, 1.0, 1.0).is_err());
        assert!(CovarianceSpec::new(
            Kernel::GaussianBump {
                amplitude: 1.0,
                center: 0.5,
                width: 0.0
            },
            1.0,
            1.0
        )
        .is_err());
    }
}
