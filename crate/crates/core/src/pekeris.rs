//! Spectrum of the Pekeris operator `∂²ₓ + k²n²(x)` on the half line with a
//! Dirichlet condition at the surface: constant index `n1` on `[0, d]` and
//! index 1 below.
//!
//! The discrete part consists of `N` trapped modes with transverse
//! wavenumbers `σ_j ∈ ((j − 1/2)π, (j + 1/2)π)` solving
//! `tan σ = −σ / √(M² − σ²)`, `M = n1·k·d·θ`. The continuum `γ < k²` carries
//! the radiating (`0 < γ < k²`) and evanescent (`γ < 0`) modes.

use std::f64::consts::PI;

use crate::{Error, Result};

/// Absolute residual tolerance of the root finder, relative to `M`.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-12;
/// Iteration cap of the root finder.
pub const ROOT_MAX_ITER: usize = 60;

/// Physical parameters of the unperturbed waveguide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveguideParams {
    n1: f64,
    d: f64,
    k: f64,
}

impl WaveguideParams {
    pub fn new(n1: f64, d: f64, k: f64) -> Result<Self> {
        if !(n1.is_finite() && n1 > 1.0) {
            return Err(Error::InvalidParameter(format!("n1 must be > 1, got {n1}")));
        }
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::InvalidParameter(format!("depth d must be > 0, got {d}")));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParameter(format!("wavenumber k must be > 0, got {k}")));
        }
        Ok(WaveguideParams { n1, d, k })
    }

    /// Parameters whose dimensionless size `n1·k·d·θ/π` equals `ratio`.
    pub fn with_mode_ratio(n1: f64, d: f64, ratio: f64) -> Result<Self> {
        let probe = WaveguideParams::new(n1, d, 1.0)?;
        let k = ratio * PI / (n1 * d * probe.theta());
        WaveguideParams::new(n1, d, k)
    }

    pub fn n1(&self) -> f64 {
        self.n1
    }
    pub fn d(&self) -> f64 {
        self.d
    }
    pub fn k(&self) -> f64 {
        self.k
    }

    /// `θ = √(1 − 1/n1²)`.
    pub fn theta(&self) -> f64 {
        (1.0 - 1.0 / (self.n1 * self.n1)).sqrt()
    }

    /// `M = n1·k·d·θ`, the right end of the admissible range of `σ`.
    pub fn dispersion_bound(&self) -> f64 {
        self.n1 * self.k * self.d * self.theta()
    }
}

/// `N = ⌊n1·k·d·θ/π⌋`.
pub fn mode_count(params: &WaveguideParams) -> usize {
    (params.dispersion_bound() / PI).floor() as usize
}

/// Pole-free form of the dispersion relation:
/// `f(y) = sin(y)·√(M² − y²) + y·cos(y)`.
pub fn dispersion_function(bound: f64, y: f64) -> f64 {
    y.sin() * (bound * bound - y * y).max(0.0).sqrt() + y * y.cos()
}

/// Trapped modes of one waveguide at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    pub params: WaveguideParams,
    /// Transverse wavenumbers `σ_j` (dimensionless), increasing.
    pub sigma: Vec<f64>,
    /// Modal wavenumbers `β_j = √(n1²k² − σ_j²/d²)`, decreasing.
    pub beta: Vec<f64>,
    /// Bottom decay rates `ζ_j = d√(β_j² − k²) = √(M² − σ_j²)`.
    pub zeta: Vec<f64>,
    /// Normalisation constants `A_j`.
    pub amplitude: Vec<f64>,
    /// Diagnostics about modes dropped at the right end of the spectrum.
    pub warnings: Vec<String>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Mode shape `φ_j(x)`, `j` 1-based.
    pub fn mode_shape(&self, j: usize, x: f64) -> Result<f64> {
        discrete_mode_shape(self, j, x)
    }

    pub fn check_index(&self, j: usize) -> Result<usize> {
        if j == 0 || j > self.len() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.len(),
            });
        }
        Ok(j - 1)
    }
}

/// Solves the dispersion relation for all trapped modes.
pub fn solve_modes(params: &WaveguideParams) -> Result<ModeSet> {
    let bound = params.dispersion_bound();
    let n = mode_count(params);
    if n == 0 {
        return Err(Error::NoPropagatingModes { ratio: bound / PI });
    }
    let tol = ROOT_RESIDUAL_TOL * bound;
    let f = |y: f64| dispersion_function(bound, y);

    let mut sigma = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for j in 1..=n {
        let lo = PI / 2.0 + (j as f64 - 1.0) * PI;
        // f(M) = M cos M vanishes whenever M/π is a half integer, a spurious
        // root with ζ = 0, so a clipped bracket stops just short of M.
        let hi = (PI / 2.0 + j as f64 * PI).min(bound * (1.0 - 4.0 * f64::EPSILON));
        let (flo, fhi) = (f(lo), f(hi));
        if flo.signum() == fhi.signum() && flo != 0.0 && fhi != 0.0 {
            if j == n {
                warnings.push(format!(
                    "mode {j}: no sign change on [{lo}, {hi}] (σ_N within rounding of M = {bound}); mode dropped"
                ));
                break;
            }
            return Err(Error::RootNotBracketed { mode: j, lo, hi });
        }
        sigma.push(brent(f, lo, hi, flo, fhi, tol, j)?);
    }
    if sigma.is_empty() {
        return Err(Error::NoPropagatingModes { ratio: bound / PI });
    }

    let (n1, k, d) = (params.n1, params.k, params.d);
    let beta: Vec<f64> = sigma
        .iter()
        .map(|s| (n1 * n1 * k * k - s * s / (d * d)).sqrt())
        .collect();
    let zeta: Vec<f64> = sigma.iter().map(|s| (bound * bound - s * s).sqrt()).collect();
    let amplitude = sigma
        .iter()
        .zip(&zeta)
        .map(|(&s, &z)| normalization_a(params, s, z))
        .collect();
    Ok(ModeSet {
        params: *params,
        sigma,
        beta,
        zeta,
        amplitude,
        warnings,
    })
}

/// Brent's method on a sign-changing bracket, stopping on the absolute residual.
fn brent(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    flo: f64,
    fhi: f64,
    tol: f64,
    mode: usize,
) -> Result<f64> {
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, flo, fhi);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..ROOT_MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let xtol = 2.0 * f64::EPSILON * b.abs();
        let m = 0.5 * (c - b);
        // run to bracket convergence; the residual tolerance only validates
        if fb == 0.0 || m.abs() <= xtol {
            break;
        }
        if e.abs() >= xtol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (xtol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > xtol { d } else { xtol.copysign(m) };
        fb = f(b);
    }
    if fb.abs() <= tol {
        Ok(b)
    } else {
        Err(Error::RootNotConverged {
            mode,
            residual: fb.abs(),
            iterations: ROOT_MAX_ITER,
        })
    }
}

/// `A_j = √((2/d) / (1 + sin²σ_j/ζ_j − sin(2σ_j)/(2σ_j)))`.
pub fn normalization_a(params: &WaveguideParams, sigma: f64, zeta: f64) -> f64 {
    let s = sigma.sin();
    let denom = 1.0 + s * s / zeta - (2.0 * sigma).sin() / (2.0 * sigma);
    (2.0 / params.d / denom).sqrt()
}

/// `φ_j(x)`: `A_j sin(σ_j x/d)` in the water column, exponential tail below.
pub fn discrete_mode_shape(modes: &ModeSet, j: usize, x: f64) -> Result<f64> {
    let i = modes.check_index(j)?;
    if !(x >= 0.0) {
        return Err(Error::DomainError {
            value: x,
            domain: "x >= 0",
        });
    }
    let d = modes.params.d;
    let (a, s, z) = (modes.amplitude[i], modes.sigma[i], modes.zeta[i]);
    Ok(if x <= d {
        a * (s * x / d).sin()
    } else {
        a * s.sin() * (-z * (x - d) / d).exp()
    })
}

/// Parameters of the continuum mode at spectral value `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiatingModeParams {
    pub gamma: f64,
    /// `η = d√(n1²k² − γ)`.
    pub eta: f64,
    /// `ξ = d√(k² − γ)`.
    pub xi: f64,
    /// `A_γ`.
    pub amplitude: f64,
}

impl RadiatingModeParams {
    /// `A_γ²`, cheaper than squaring when only the square is needed.
    pub fn amplitude_sq(&self, d: f64) -> f64 {
        amplitude_sq(d, self.eta, self.xi)
    }
}

fn amplitude_sq(d: f64, eta: f64, xi: f64) -> f64 {
    let (s, c) = eta.sin_cos();
    d * xi / (PI * (xi * xi * s * s + eta * eta * c * c))
}

pub fn radiating_mode_params(params: &WaveguideParams, gamma: f64) -> Result<RadiatingModeParams> {
    let k2 = params.k * params.k;
    if !gamma.is_finite() || gamma >= k2 || gamma == 0.0 {
        return Err(Error::InvalidSpectralParameter { gamma, k2 });
    }
    let d = params.d;
    let eta = d * (params.n1 * params.n1 * k2 - gamma).sqrt();
    let xi = d * (k2 - gamma).sqrt();
    Ok(RadiatingModeParams {
        gamma,
        eta,
        xi,
        amplitude: amplitude_sq(d, eta, xi).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};

    fn params(ratio: f64) -> WaveguideParams {
        WaveguideParams::with_mode_ratio(1.2, 1.0, ratio).unwrap()
    }

    #[test]
    fn mode_count_is_floor() {
        assert_eq!(mode_count(&params(3.7)), 3);
        assert_eq!(mode_count(&params(0.6)), 0);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(WaveguideParams::new(1.0, 1.0, 1.0).is_err());
        assert!(WaveguideParams::new(1.5, 0.0, 1.0).is_err());
        assert!(WaveguideParams::new(1.5, 1.0, -2.0).is_err());
        assert!(WaveguideParams::new(f64::NAN, 1.0, 1.0).is_err());
    }

    #[test]
    fn theta_is_recomputed() {
        let p = WaveguideParams::new(1.25, 2.0, 3.0).unwrap();
        assert_eq!(p.theta(), (1.0 - 1.0 / (1.25f64 * 1.25)).sqrt());
    }

    #[test]
    fn no_modes_just_above_half_pi() {
        let p = WaveguideParams::with_mode_ratio(1.2, 1.0, 0.5 + 1e-6).unwrap();
        assert!(matches!(solve_modes(&p), Err(Error::NoPropagatingModes { .. })));
    }

    #[test]
    fn two_mode_guide_roots_match_grid_scan() {
        // M = 2π: brackets from a dense scan of f on (0, M).
        let p = params(2.0);
        let modes = solve_modes(&p).unwrap();
        assert_eq!(modes.len(), 2);
        let bound = p.dispersion_bound();
        let grid: Vec<f64> = (1..200_000).map(|i| bound * i as f64 / 200_000.0).collect();
        let crossings: Vec<f64> = grid
            .windows(2)
            .filter(|w| dispersion_function(bound, w[0]).signum() != dispersion_function(bound, w[1]).signum())
            .map(|w| 0.5 * (w[0] + w[1]))
            .collect();
        assert_eq!(crossings.len(), 2);
        for (s, c) in modes.sigma.iter().zip(&crossings) {
            assert!((s - c).abs() < 2.0 * bound / 200_000.0);
        }
        assert!(modes.sigma[0] > PI / 2.0 && modes.sigma[0] < 1.5 * PI);
        assert!(modes.sigma[1] > 1.5 * PI && modes.sigma[1] < 2.0 * PI);
    }

    #[test]
    fn integer_ratio_edge() {
        let p = params(5.0);
        let m = solve_modes(&p).unwrap();
        assert!(m.len() == 5 || m.len() == 4, "floor(5.0) or rounding-dropped: {}", m.len());
    }

    #[test]
    fn half_integer_ratio_avoids_spurious_endpoint_root() {
        let p = params(8.5);
        let m = solve_modes(&p).unwrap();
        assert_eq!(m.len(), 8);
        let last = m.sigma[7];
        assert!(last > 7.5 * PI && last < p.dispersion_bound());
        assert!(m.zeta[7] > 0.0 && m.amplitude[7].is_finite());
    }

    #[test]
    fn mode_set_invariants() {
        let p = params(17.4);
        let m = solve_modes(&p).unwrap();
        let bound = p.dispersion_bound();
        let k = p.k();
        for j in 0..m.len() {
            let jj = (j + 1) as f64;
            assert!(m.sigma[j] > PI / 2.0 + (jj - 1.0) * PI && m.sigma[j] < PI / 2.0 + jj * PI);
            assert!(dispersion_function(bound, m.sigma[j]).abs() <= 1e-12 * bound);
            let t = m.sigma[j].tan() + m.sigma[j] / m.zeta[j];
            assert!(t.abs() < 1e-8 * (1.0 + m.sigma[j].tan().abs()));
            assert!(m.zeta[j] > 0.0);
            assert!(m.beta[j] * m.beta[j] > k * k && m.beta[j] < p.n1() * k);
            let zeta_direct = p.d() * (m.beta[j] * m.beta[j] - k * k).sqrt();
            assert!((zeta_direct - m.zeta[j]).abs() < 1e-9 * bound);
        }
        for w in m.sigma.windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in m.beta.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn amplitude_for_integer_multiple_of_pi() {
        let p = params(3.5);
        let a = normalization_a(&p, 2.0 * PI, 1.7);
        assert!((a - (2.0 / p.d()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn amplitude_matches_l2_norm_quadrature() {
        let p = WaveguideParams::with_mode_ratio(1.3, 2.5, 6.3).unwrap();
        let m = solve_modes(&p).unwrap();
        let d = p.d();
        let tol = Tolerance {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_intervals: 500,
        };
        for j in 1..=m.len() {
            let i = j - 1;
            // Shape built independently of `discrete_mode_shape`, unit amplitude.
            let s = m.sigma[i];
            let z = m.zeta[i];
            let inner = integrate(|x| (s * x / d).sin().powi(2), 0.0, d, tol).unwrap().0;
            let tail_end = d + 40.0 * d / z;
            let tail = integrate(|x| (s.sin() * (-z * (x - d) / d).exp()).powi(2), d, tail_end, tol)
                .unwrap()
                .0;
            let a_oracle = (1.0 / (inner + tail)).sqrt();
            assert!((m.amplitude[i] - a_oracle).abs() <= 1e-6 * a_oracle);
        }
    }

    #[test]
    fn mode_shape_boundaries() {
        let m = solve_modes(&params(4.4)).unwrap();
        let d = m.params.d();
        for j in 1..=m.len() {
            assert_eq!(m.mode_shape(j, 0.0).unwrap(), 0.0);
            let i = j - 1;
            let above = m.amplitude[i] * m.sigma[i].sin();
            let below = m.amplitude[i] * m.sigma[i].sin() * (-m.zeta[i] * 0.0 / d).exp();
            assert!((above - below).abs() <= f64::EPSILON * above.abs());
            assert!((m.mode_shape(j, d).unwrap() - above).abs() <= 4.0 * f64::EPSILON);
        }
        assert!(matches!(m.mode_shape(0, 0.1), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(m.mode_shape(m.len() + 1, 0.1), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn radiating_parameters() {
        let p = WaveguideParams::new(1.2, 1.0, 10.0).unwrap();
        let k2 = p.k() * p.k();
        assert!(matches!(radiating_mode_params(&p, k2), Err(Error::InvalidSpectralParameter { .. })));
        assert!(radiating_mode_params(&p, 0.0).is_err());

        let r = radiating_mode_params(&p, k2 / 2.0).unwrap();
        let eta = (1.44 * 100.0 - 50.0f64).sqrt();
        let xi = (100.0 - 50.0f64).sqrt();
        let a2 = xi / (PI * (xi * xi * eta.sin().powi(2) + eta * eta * eta.cos().powi(2)));
        assert!((r.eta - eta).abs() < 1e-12 && (r.xi - xi).abs() < 1e-12);
        assert!((r.amplitude - a2.sqrt()).abs() < 1e-14);
        assert!((r.amplitude_sq(p.d()) - a2).abs() < 1e-14);

        let ev = radiating_mode_params(&p, -25.0).unwrap();
        assert!(ev.eta > 0.0 && ev.xi > 0.0);
    }

    #[test]
    fn evanescent_amplitude_asymptotics() {
        let p = WaveguideParams::new(1.2, 1.0, 10.0).unwrap();
        let mut prev = f64::INFINITY;
        for g in [1e4, 1e6, 1e8, 1e10] {
            let r = radiating_mode_params(&p, -g).unwrap();
            let dev = (r.amplitude * g.powf(0.25) - 1.0 / PI.sqrt()).abs();
            assert!(dev < prev.max(1e-9));
            prev = dev;
        }
        assert!(prev < 1e-4);
    }
}
