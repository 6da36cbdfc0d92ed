//! Gauss–Legendre rules and adaptive Gauss–Kronrod integration.
//!
//! Legendre nodes come from `gauss-quad` and are cached per order, since the
//! spectral integrals request the same handful of orders many times.

use std::collections::{BinaryHeap, HashMap};
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

use crate::{Error, Result};

/// Node/weight pairs of a Gauss–Legendre rule on `[-1, 1]`.
pub type Rule = Arc<[(f64, f64)]>;

/// Cached Gauss–Legendre rule of the given order.
pub fn gauss_legendre(order: usize) -> Rule {
    static CACHE: OnceLock<Mutex<HashMap<usize, Rule>>> = OnceLock::new();
    let order = order.max(1);
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("rule cache poisoned").get(&order) {
        return Arc::clone(rule);
    }
    let quad = GaussLegendre::new(NonZeroUsize::new(order).expect("order >= 1"));
    let rule: Rule = quad.as_node_weight_pairs().to_vec().into();
    cache
        .lock()
        .expect("rule cache poisoned")
        .entry(order)
        .or_insert(rule)
        .clone()
}

/// Maps a rule on `[-1, 1]` to `[a, b]`, yielding `(x, w)` pairs.
pub fn mapped(rule: &[(f64, f64)], a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter().map(move |&(x, w)| (mid + half * x, half * w))
}

/// Fixed-order Gauss–Legendre integral of `f` over `[a, b]`.
pub fn integrate_fixed(f: impl Fn(f64) -> f64, a: f64, b: f64, order: usize) -> f64 {
    let rule = gauss_legendre(order);
    mapped(&rule, a, b).map(|(x, w)| w * f(x)).sum()
}

// Kronrod 15-point extension of the 7-point Gauss rule (QUADPACK constants).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration of a vector-valued integrand.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature<const K: usize> {
    pub value: [f64; K],
    /// Sum of the per-interval |Kronrod − Gauss| estimates, max over components.
    pub error: f64,
    pub intervals: usize,
}

/// Tolerances for [`integrate_adaptive`]. Convergence is declared when the
/// estimated error is below `max(abs_tol, rel_tol · |I|∞)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs_tol: 0.0,
            rel_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

struct Panel<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: f64,
}

impl<const K: usize> PartialEq for Panel<K> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const K: usize> Eq for Panel<K> {}
impl<const K: usize> PartialOrd for Panel<K> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for Panel<K> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<const K: usize, F: FnMut(f64) -> [f64; K]>(f: &mut F, a: f64, b: f64) -> Panel<K> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kron = [0.0; K];
    let mut gauss = [0.0; K];
    for c in 0..K {
        kron[c] = WGK[7] * fc[c];
        gauss[c] = WG[3] * fc[c];
    }
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let f1 = f(mid - half * x);
        let f2 = f(mid + half * x);
        for c in 0..K {
            kron[c] += wk * (f1[c] + f2[c]);
            if i % 2 == 1 {
                gauss[c] += WG[i / 2] * (f1[c] + f2[c]);
            }
        }
    }
    let mut error: f64 = 0.0;
    for c in 0..K {
        kron[c] *= half;
        gauss[c] *= half;
        error = error.max((kron[c] - gauss[c]).abs());
    }
    Panel {
        a,
        b,
        value: kron,
        error,
    }
}

/// Globally adaptive G7–K15 integration of a vector-valued integrand over a
/// finite interval. The panel with the largest error is bisected until the
/// tolerance is met.
pub fn integrate_adaptive<const K: usize, F>(
    mut f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Quadrature<K>>
where
    F: FnMut(f64) -> [f64; K],
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "integration bounds must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(Quadrature {
            value: [0.0; K],
            error: 0.0,
            intervals: 0,
        });
    }
    let mut heap = BinaryHeap::new();
    heap.push(kronrod15(&mut f, a, b));
    loop {
        let mut total = [0.0; K];
        let mut err = 0.0;
        for p in heap.iter() {
            for c in 0..K {
                total[c] += p.value[c];
            }
            err += p.error;
        }
        let scale = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if err <= tol.abs_tol.max(tol.rel_tol * scale) || (err == 0.0) {
            return Ok(Quadrature {
                value: total,
                error: err,
                intervals: heap.len(),
            });
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::QuadratureNotConverged(format!(
                "adaptive Gauss–Kronrod on [{a}, {b}]: error {err:e} after {} panels",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Panel cannot be split further in floating point.
            return Err(Error::QuadratureNotConverged(format!(
                "panel [{}, {}] reached machine resolution",
                worst.a, worst.b
            )));
        }
        heap.push(kronrod15(&mut f, worst.a, m));
        heap.push(kronrod15(&mut f, m, worst.b));
    }
}

/// Scalar convenience wrapper around [`integrate_adaptive`].
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: Tolerance) -> Result<(f64, f64)> {
    let q = integrate_adaptive(|x| [f(x)], a, b, tol)?;
    Ok((q.value[0], q.error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let v = integrate_fixed(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, 4);
        assert!((v - (256.0 / 8.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn rules_are_cached() {
        let a = gauss_legendre(37);
        let b = gauss_legendre(37);
        assert!(Arc::ptr_eq(&a, &b));
        let wsum: f64 = a.iter().map(|p| p.1).sum();
        assert!((wsum - 2.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_handles_sqrt_endpoint() {
        let (v, _) = integrate(|x| x.sqrt(), 0.0, 1.0, Tolerance::default()).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_vector_components_share_panels() {
        let q = integrate_adaptive(|x| [x.sin(), x.cos()], 0.0, std::f64::consts::PI, Tolerance::default())
            .unwrap();
        assert!((q.value[0] - 2.0).abs() < 1e-12);
        assert!(q.value[1].abs() < 1e-12);
    }

    #[test]
    fn adaptive_reports_non_convergence() {
        let tol = Tolerance {
            abs_tol: 0.0,
            rel_tol: 1e-14,
            max_intervals: 3,
        };
        let r = integrate(|x| (1.0 / x).sin(), 1e-6, 1.0, tol);
        assert!(matches!(r, Err(Error::QuadratureNotConverged(_))));
    }
}
