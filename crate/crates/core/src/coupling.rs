//! Statistical coupling coefficients under the covariance
//! `E[V(x, z1) V(y, z2)] = γ0(x, y) e^{−a|z1 − z2|}`.
//!
//! All longitudinal integrals are closed-form transforms of `e^{−az}`; only the
//! integrals over the continuous spectrum are done numerically.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::medium::CovarianceSpec;
use crate::pekeris::{radiating_mode_params, ModeSet, RadiatingModeParams};
use crate::quadrature::{integrate_adaptive, Tolerance};
use crate::{Error, Result};

/// Relative tolerance of the continuum-spectrum integrals.
const SPECTRAL_REL_TOL: f64 = 1e-10;
/// The evanescent integral stops once the integrand has fallen below this
/// fraction of its peak.
const KAPPA_TAIL_FRACTION: f64 = 1e-12;
const KAPPA_MAX_DOUBLINGS: usize = 60;

/// Overlap integrals `I_jl = ∫∫ γ0(x, y) φ_j(x) φ_l(x) φ_j(y) φ_l(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOverlap {
    pub discrete: DMatrix<f64>,
}

fn check_compatible(modes: &ModeSet, spec: &CovarianceSpec) -> Result<()> {
    let d = modes.params.d();
    if (spec.d() - d).abs() > 1e-12 * d {
        return Err(Error::InvalidParameter(format!(
            "covariance depth {} differs from waveguide depth {d}",
            spec.d()
        )));
    }
    Ok(())
}

pub fn overlap_discrete(modes: &ModeSet, spec: &CovarianceSpec) -> Result<ModeOverlap> {
    check_compatible(modes, spec)?;
    let n = modes.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (j..n)
                .map(|l| {
                    let (sj, sl) = (modes.sigma[j], modes.sigma[l]);
                    let a2 = modes.amplitude[j].powi(2) * modes.amplitude[l].powi(2);
                    Ok(0.25 * a2 * spec.s_difference(sj - sl, sj + sl)?)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut m = DMatrix::zeros(n, n);
    for (j, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            m[(j, j + off)] = v;
            m[(j + off, j)] = v;
        }
    }
    Ok(ModeOverlap { discrete: m })
}

/// `I_jγ` for the continuum mode at spectral value `γ` (radiating for
/// `0 < γ < k²`, evanescent for `γ < 0`). `j` is 1-based.
pub fn overlap_continuum(modes: &ModeSet, spec: &CovarianceSpec, j: usize, gamma: f64) -> Result<f64> {
    modes.check_index(j)?;
    let rad = radiating_mode_params(&modes.params, gamma)?;
    overlap_radiating(modes, spec, j - 1, &rad)
}

fn overlap_radiating(modes: &ModeSet, spec: &CovarianceSpec, j: usize, rad: &RadiatingModeParams) -> Result<f64> {
    let sj = modes.sigma[j];
    let d = modes.params.d();
    Ok(0.25 * modes.amplitude[j].powi(2) * rad.amplitude_sq(d) * spec.s_difference(sj - rad.eta, sj + rad.eta)?)
}

fn k4(modes: &ModeSet) -> f64 {
    modes.params.k().powi(4)
}

fn close_diagonal(mut m: DMatrix<f64>) -> DMatrix<f64> {
    for j in 0..m.nrows() {
        m[(j, j)] = 0.0;
        let s: f64 = m.row(j).iter().sum();
        m[(j, j)] = -s;
    }
    m
}

/// Energy transport matrix `Γ^c`.
pub fn gamma_c_matrix(overlap: &ModeOverlap, modes: &ModeSet, spec: &CovarianceSpec) -> DMatrix<f64> {
    let n = modes.len();
    let a = spec.a();
    let b = &modes.beta;
    let m = DMatrix::from_fn(n, n, |j, l| {
        if j == l {
            0.0
        } else {
            a * k4(modes) * overlap.discrete[(j, l)] / (2.0 * b[j] * b[l] * (a * a + (b[j] - b[l]).powi(2)))
        }
    });
    close_diagonal(m)
}

/// Sine-transform counterpart `Γ^s`.
pub fn gamma_s_matrix(overlap: &ModeOverlap, modes: &ModeSet, spec: &CovarianceSpec) -> DMatrix<f64> {
    let n = modes.len();
    let a = spec.a();
    let b = &modes.beta;
    let m = DMatrix::from_fn(n, n, |j, l| {
        if j == l {
            0.0
        } else {
            let db = b[l] - b[j];
            k4(modes) * overlap.discrete[(j, l)] * db / (2.0 * b[j] * b[l] * (a * a + db * db))
        }
    });
    close_diagonal(m)
}

/// `Γ^1_jl = k⁴ J_jl / (2aβ_jβ_l)` with `J_jl = ∫∫ γ0 φ_j²(x) φ_l²(y)`, expanded
/// through `sin² = (1 − cos 2·)/2` into four spectral values.
pub fn gamma_1_matrix(modes: &ModeSet, spec: &CovarianceSpec) -> Result<DMatrix<f64>> {
    check_compatible(modes, spec)?;
    let n = modes.len();
    let zero = spec.transforms(0.0)?;
    let doubled = modes
        .sigma
        .par_iter()
        .map(|&s| spec.transforms(2.0 * s))
        .collect::<Result<Vec<_>>>()?;
    let s00 = spec.s_from(&zero, &zero);
    let a = spec.a();
    let b = &modes.beta;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for l in j..n {
            let bracket = s00 - spec.s_from(&doubled[j], &zero) - spec.s_from(&zero, &doubled[l])
                + spec.s_from(&doubled[j], &doubled[l]);
            let jl = 0.25 * modes.amplitude[j].powi(2) * modes.amplitude[l].powi(2) * bracket;
            let v = k4(modes) * jl / (2.0 * a * b[j] * b[l]);
            m[(j, l)] = v;
            m[(l, j)] = v;
        }
    }
    Ok(m)
}

/// Points of `[lo, hi]` (in the integration variable `t`) where `η(t)` crosses
/// one of the spectral-cutoff edges `σ ± c`, `c − σ`, so that the integrand
/// is smooth on every piece.
fn cutoff_breaks(spec: &CovarianceSpec, sigma: f64, eta_of: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    if let Some(c) = spec.spectral_cutoff() {
        for target in [sigma - c, sigma + c, c - sigma] {
            // η is monotone in t on every branch used here: bisect for the crossing.
            let (e_lo, e_hi) = (eta_of(lo) - target, eta_of(hi) - target);
            if e_lo * e_hi < 0.0 {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if (eta_of(m) - target) * e_lo > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                    if b - a <= 1e-15 * hi.abs() {
                        break;
                    }
                }
                let t = 0.5 * (a + b);
                if t - lo > 1e-12 * (hi - lo) && hi - t > 1e-12 * (hi - lo) {
                    pts.push(t);
                }
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Radiative loss `Λ^c` and its sine counterpart `Λ^s`, integrated together
/// over `γ = s²`, `s ∈ (0, k)`.
pub fn lambda_vectors(modes: &ModeSet, spec: &CovarianceSpec) -> Result<(DVector<f64>, DVector<f64>)> {
    check_compatible(modes, spec)?;
    let n = modes.len();
    let k = modes.params.k();
    let n1k = modes.params.n1() * k;
    let d = modes.params.d();
    let a = spec.a();
    let k4 = k4(modes);
    let pairs = (0..n)
        .into_par_iter()
        .map(|j| -> Result<[f64; 2]> {
            let bj = modes.beta[j];
            let sigma = modes.sigma[j];
            let mut failure = None;
            // ξ is passed separately so that it keeps full precision next to
            // the branch point s = k
            let mut integrand = |s: f64, xi: f64| -> [f64; 2] {
                if xi <= 0.0 {
                    return [0.0; 2];
                }
                let mut rad = RadiatingModeParams {
                    gamma: s * s,
                    eta: d * (n1k * n1k - s * s).sqrt(),
                    xi,
                    amplitude: 0.0,
                };
                rad.amplitude = rad.amplitude_sq(d).sqrt();
                match overlap_radiating(modes, spec, j, &rad) {
                    Ok(i) => {
                        let den = bj * (a * a + (bj - s).powi(2));
                        [a * k4 * i / den, k4 * i * (s - bj) / den]
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        [0.0; 2]
                    }
                }
            };
            let breaks = cutoff_breaks(spec, sigma, |s| d * (n1k * n1k - s * s).sqrt(), 0.0, k);
            let tol = Tolerance {
                abs_tol: 0.0,
                rel_tol: SPECTRAL_REL_TOL,
                max_intervals: 5000,
            };
            let mut total = [0.0; 2];
            for w in breaks.windows(2) {
                let q = if w[1] < k {
                    integrate_adaptive(|s: f64| integrand(s, d * ((k - s) * (k + s)).sqrt()), w[0], w[1], tol)?
                } else {
                    // A_γ² ~ 1/ξ at the branch point when cos η(k) = 0: s = k − w²
                    // turns the inverse square root into a bounded integrand
                    let sub = |w: f64| integrand(k - w * w, d * w * (2.0 * k - w * w).sqrt()).map(|v| 2.0 * w * v);
                    integrate_adaptive(sub, 0.0, (k - w[0]).sqrt(), tol)?
                };
                total[0] += q.value[0];
                total[1] += q.value[1];
            }
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(total)
        })
        .collect::<Result<Vec<_>>>()?;
    let lc = DVector::from_iterator(n, pairs.iter().map(|p| p[0]));
    let ls = DVector::from_iterator(n, pairs.iter().map(|p| p[1]));
    for (j, &v) in lc.iter().enumerate() {
        if v < 0.0 {
            // An integral of a nonnegative density: only roundoff can make it negative.
            let scale = pairs[j][0].abs().max(pairs[j][1].abs());
            if v < -1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::NegativeLambda { index: j + 1, value: v });
            }
        }
    }
    Ok((lc.map(|v| v.max(0.0)), ls))
}

pub fn lambda_c_vector(modes: &ModeSet, spec: &CovarianceSpec) -> Result<DVector<f64>> {
    lambda_vectors(modes, spec).map(|p| p.0)
}

pub fn lambda_s_vector(modes: &ModeSet, spec: &CovarianceSpec) -> Result<DVector<f64>> {
    lambda_vectors(modes, spec).map(|p| p.1)
}

/// Evanescent phase coefficients together with their truncation data.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaVector {
    pub values: DVector<f64>,
    /// Truncation point in `t = √|γ|`.
    pub cutoff: DVector<f64>,
    /// Bound on the neglected tail, assuming `|f(t)| ≤ C/t²` beyond the cutoff.
    pub tail_bound: DVector<f64>,
}

/// `κ_j = ∫₀^∞ k⁴ I_{j,−t²} / β_j · (a + t)/((a + t)² + β_j²) dt` (γ = −t²).
pub fn kappa_vector(modes: &ModeSet, spec: &CovarianceSpec) -> Result<KappaVector> {
    check_compatible(modes, spec)?;
    let n = modes.len();
    let k = modes.params.k();
    let n1k = modes.params.n1() * k;
    let d = modes.params.d();
    let a = spec.a();
    let k4 = k4(modes);
    let results = (0..n)
        .into_par_iter()
        .map(|j| -> Result<[f64; 3]> {
            let bj = modes.beta[j];
            let sigma = modes.sigma[j];
            let eval = |t: f64| -> Result<f64> {
                if t == 0.0 {
                    return Ok(0.0);
                }
                let i = overlap_continuum(modes, spec, j + 1, -t * t)?;
                Ok(k4 * i / bj * (a + t) / ((a + t).powi(2) + bj * bj))
            };
            let eta_of = |t: f64| d * (n1k * n1k + t * t).sqrt();
            let panel = |lo: f64, hi: f64, abs_tol: f64| -> Result<f64> {
                let mut failure = None;
                let mut f = |t: f64| match eval(t) {
                    Ok(v) => [v],
                    Err(e) => {
                        failure.get_or_insert(e);
                        [0.0]
                    }
                };
                let tol = Tolerance {
                    abs_tol,
                    rel_tol: SPECTRAL_REL_TOL,
                    max_intervals: 20000,
                };
                let mut total = 0.0;
                for w in cutoff_breaks(spec, sigma, eta_of, lo, hi).windows(2) {
                    total += integrate_adaptive(&mut f, w[0], w[1], tol)?.value[0];
                }
                match failure {
                    Some(e) => Err(e),
                    None => Ok(total),
                }
            };
            // Envelope of |f| on [lo, hi]: dense enough to see every oscillation.
            let envelope = |lo: f64, hi: f64| -> Result<(f64, f64)> {
                let periods = d * (hi - lo) / std::f64::consts::PI;
                let m = ((8.0 * periods) as usize).clamp(64, 40000);
                let mut peak: f64 = 0.0;
                let mut weighted: f64 = 0.0;
                for i in 0..=m {
                    let t = lo + (hi - lo) * i as f64 / m as f64;
                    let v = eval(t)?.abs();
                    peak = peak.max(v);
                    weighted = weighted.max(v * t * t);
                }
                Ok((peak, weighted))
            };
            let t0 = a.max(bj).max(k).max(std::f64::consts::PI / d);
            let (mut peak, _) = envelope(0.0, t0)?;
            let mut total = panel(0.0, t0, 0.0)?;
            let mut t = t0;
            for _ in 0..KAPPA_MAX_DOUBLINGS {
                let (p, weighted) = envelope(t, 2.0 * t)?;
                let abs_tol = 1e-12 * total.abs().max(peak * t0);
                total += panel(t, 2.0 * t, abs_tol)?;
                t *= 2.0;
                if p <= KAPPA_TAIL_FRACTION * peak || (p == 0.0 && peak == 0.0) {
                    return Ok([total, t, weighted / t]);
                }
                peak = peak.max(p);
            }
            Err(Error::QuadratureNotConverged(format!(
                "evanescent integral for mode {} not truncated by t = {t:e}",
                j + 1
            )))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KappaVector {
        values: DVector::from_iterator(n, results.iter().map(|r| r[0])),
        cutoff: DVector::from_iterator(n, results.iter().map(|r| r[1])),
        tail_bound: DVector::from_iterator(n, results.iter().map(|r| r[2])),
    })
}

/// All coupling coefficients of one mode set in one random medium.
#[derive(Debug, Clone)]
pub struct CouplingCoefficients {
    pub gamma_c: DMatrix<f64>,
    pub gamma_s: DMatrix<f64>,
    pub gamma_1: DMatrix<f64>,
    pub lambda_c: DVector<f64>,
    pub lambda_s: DVector<f64>,
    pub kappa: KappaVector,
    pub overlap: ModeOverlap,
    pub modes: ModeSet,
    pub spec: CovarianceSpec,
}

impl CouplingCoefficients {
    pub fn compute(modes: &ModeSet, spec: &CovarianceSpec) -> Result<Self> {
        let overlap = overlap_discrete(modes, spec)?;
        let gamma_c = gamma_c_matrix(&overlap, modes, spec);
        let gamma_s = gamma_s_matrix(&overlap, modes, spec);
        let gamma_1 = gamma_1_matrix(modes, spec)?;
        let (lambda_c, lambda_s) = lambda_vectors(modes, spec)?;
        let kappa = kappa_vector(modes, spec)?;
        Ok(CouplingCoefficients {
            gamma_c,
            gamma_s,
            gamma_1,
            lambda_c,
            lambda_s,
            kappa,
            overlap,
            modes: modes.clone(),
            spec: spec.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::Kernel;
    use crate::pekeris::{solve_modes, WaveguideParams};
    use crate::quadrature::integrate_fixed;

    fn setup(ratio: f64, kernel: Kernel) -> (ModeSet, CovarianceSpec) {
        let p = WaveguideParams::with_mode_ratio(1.2, 1.0, ratio).unwrap();
        (solve_modes(&p).unwrap(), CovarianceSpec::new(kernel, 1.3, 1.0).unwrap())
    }

    fn bump() -> Kernel {
        Kernel::Sum(vec![
            Kernel::GaussianBump {
                amplitude: 0.8,
                center: 0.4,
                width: 0.2,
            },
            Kernel::Constant { value: 0.1 },
        ])
    }

    #[test]
    fn zero_kernel_gives_zero_coefficients() {
        let (m, s) = setup(3.4, Kernel::Zero);
        let c = CouplingCoefficients::compute(&m, &s).unwrap();
        assert_eq!(c.gamma_c.amax(), 0.0);
        assert_eq!(c.gamma_s.amax(), 0.0);
        assert_eq!(c.gamma_1.amax(), 0.0);
        assert_eq!(c.lambda_c.amax(), 0.0);
        assert_eq!(c.lambda_s.amax(), 0.0);
        assert_eq!(c.kappa.values.amax(), 0.0);
    }

    #[test]
    fn overlap_matches_product_of_modes() {
        let (m, s) = setup(2.6, Kernel::Constant { value: 0.7 });
        let o = overlap_discrete(&m, &s).unwrap();
        for j in 1..=2 {
            for l in 1..=2 {
                let f = |x: f64| m.mode_shape(j, x).unwrap() * m.mode_shape(l, x).unwrap();
                let brute = integrate_fixed(|x| integrate_fixed(|y| s.gamma0(x, y) * f(x) * f(y), 0.0, 1.0, 80), 0.0, 1.0, 80);
                let v = o.discrete[(j - 1, l - 1)];
                assert!((v - brute).abs() <= 1e-6 * brute.abs().max(1e-12), "{j}{l}: {v} {brute}");
            }
        }
    }

    #[test]
    fn gamma_1_matches_brute_force() {
        let (m, s) = setup(3.4, bump());
        let g1 = gamma_1_matrix(&m, &s).unwrap();
        let k4 = m.params.k().powi(4);
        for j in 1..=3 {
            for l in 1..=3 {
                let fj = |x: f64| m.mode_shape(j, x).unwrap().powi(2);
                let fl = |y: f64| m.mode_shape(l, y).unwrap().powi(2);
                let jl = integrate_fixed(|x| integrate_fixed(|y| s.gamma0(x, y) * fj(x) * fl(y), 0.0, 1.0, 100), 0.0, 1.0, 100);
                let want = k4 * jl / (2.0 * s.a() * m.beta[j - 1] * m.beta[l - 1]);
                assert!((g1[(j - 1, l - 1)] - want).abs() <= 1e-9 * want.abs(), "{j}{l}");
            }
        }
    }

    #[test]
    fn gamma_s_sign_and_diagonal() {
        let (m, s) = setup(4.3, bump());
        let o = overlap_discrete(&m, &s).unwrap();
        let gs = gamma_s_matrix(&o, &m, &s);
        for j in 0..4 {
            let row: f64 = gs.row(j).iter().sum();
            assert!(row.abs() < 1e-12 * gs.amax());
            for l in 0..4 {
                if j != l && o.discrete[(j, l)] > 0.0 {
                    assert_eq!(gs[(j, l)] > 0.0, m.beta[l] > m.beta[j]);
                }
            }
        }
        // sine transform of e^{−az} by quadrature
        let (j, l) = (0, 1);
        let w = m.beta[l] - m.beta[j];
        let (lt, _) = crate::quadrature::integrate(
            |z| (-s.a() * z).exp() * (w * z).sin(),
            0.0,
            60.0,
            Tolerance::default(),
        )
        .unwrap();
        let want = m.params.k().powi(4) * o.discrete[(j, l)] * lt / (2.0 * m.beta[j] * m.beta[l]);
        assert!((gs[(j, l)] - want).abs() < 1e-9 * want.abs());
    }

    #[test]
    fn lambda_matches_direct_gamma_integral() {
        // integrate in γ directly (no substitution) away from the endpoint singularity
        let (m, s) = setup(2.3, bump());
        let (lc, ls) = lambda_vectors(&m, &s).unwrap();
        let k = m.params.k();
        let a = s.a();
        for j in 0..2 {
            let bj = m.beta[j];
            let q = integrate_adaptive(
                |g: f64| {
                    let i = overlap_continuum(&m, &s, j + 1, g).unwrap();
                    let r = g.sqrt();
                    let den = 2.0 * bj * r * (a * a + (bj - r).powi(2));
                    let k4 = k.powi(4);
                    [a * k4 * i / den, k4 * i * (r - bj) / den]
                },
                1e-12,
                k * k,
                Tolerance {
                    abs_tol: 0.0,
                    rel_tol: 1e-11,
                    max_intervals: 20000,
                },
            )
            .unwrap();
            assert!(lc[j] > 0.0);
            assert!((lc[j] - q.value[0]).abs() < 1e-6 * lc[j], "{} {}", lc[j], q.value[0]);
            assert!((ls[j] - q.value[1]).abs() < 1e-6 * ls[j].abs().max(lc[j]));
        }
    }

    #[test]
    fn band_limited_kernel_confines_loss_and_coupling() {
        let (m, s) = setup(8.5, Kernel::CosineBand { amplitude: 1.0 });
        let c = CouplingCoefficients::compute(&m, &s).unwrap();
        let n = m.len();
        for j in 0..n {
            for l in 0..n {
                if j.abs_diff(l) >= 2 {
                    assert_eq!(c.gamma_c[(j, l)], 0.0);
                }
            }
        }
        for j in 0..n - 2 {
            assert_eq!(c.lambda_c[j], 0.0);
        }
        assert!(c.lambda_c[n - 1] > 0.0, "{:?} {:?}", c.lambda_c, m.sigma);
    }

    #[test]
    fn kappa_is_finite_and_tail_is_small() {
        let (m, s) = setup(2.4, bump());
        let kv = kappa_vector(&m, &s).unwrap();
        for j in 0..m.len() {
            assert!(kv.values[j].is_finite());
            assert!(kv.tail_bound[j] <= 1e-8 * kv.values[j].abs(), "{:?}", kv);
        }
    }
}
