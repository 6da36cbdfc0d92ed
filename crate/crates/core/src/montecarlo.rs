//! Feynman–Kac estimator of the mean mode powers.
//!
//! `T_j^l(L) = E_l[exp(−∫₀^L Λ(Y_s) ds) 1{Y_L = j}]` where `Y` is the jump
//! process with rates `Γ^c_{nj}` out of state `j`. Paths are simulated exactly
//! (exponential holding times, exact per-sojourn weights).
//!
//! Each starting state is split into chunks of [`CHUNK`] paths. Chunk `c` of
//! start `l` draws from its own ChaCha8 stream `(l << 32) | c`, and the chunk
//! sums are reduced in a fixed order, so estimates do not depend on the
//! thread count.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decay::least_squares_slope;
use crate::power::PowerSystem;
use crate::{Error, Result};

pub const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct JumpChainSpec {
    /// Off-diagonal jump intensities (diagonal ignored).
    pub rates: DMatrix<f64>,
    pub kill: DVector<f64>,
    pub seed: u64,
}

impl JumpChainSpec {
    pub fn new(rates: DMatrix<f64>, kill: DVector<f64>, seed: u64) -> Result<Self> {
        // reuse the power-system validation of shapes and signs
        let s = PowerSystem::new(rates, kill)?;
        Ok(Self::from_system(&s, seed))
    }

    pub fn from_system(system: &PowerSystem, seed: u64) -> Self {
        let mut rates = system.transport().clone();
        rates.fill_diagonal(0.0);
        JumpChainSpec {
            rates,
            kill: system.loss().clone(),
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.kill.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kill.is_empty()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        JumpChainSpec {
            seed,
            ..self.clone()
        }
    }

    /// Total jump rate out of state `j` (0-based), `−Γ^c_jj`.
    pub fn holding_rate(&self, j: usize) -> f64 {
        (0..self.len()).filter(|&n| n != j).map(|n| self.rates[(n, j)]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    /// `mean[(j, l)]` estimates `T_j^l(L)`.
    pub mean: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
    /// Paths per starting state.
    pub n_paths: usize,
    /// Fraction of `[0, L]` spent in each state, averaged over all paths of all
    /// starting states (uniform initial law).
    pub local_time_fraction: DVector<f64>,
    pub local_time_stderr: DVector<f64>,
    /// `Σ_j T_j^l(L)` per starting state and its standard error.
    pub total: DVector<f64>,
    pub total_stderr: DVector<f64>,
}

/// Sums accumulated by one chunk of paths from one starting state.
#[derive(Clone)]
struct Partial {
    w: Vec<f64>,
    w2: Vec<f64>,
    total: f64,
    total2: f64,
    occ: Vec<f64>,
    occ2: Vec<f64>,
}

impl Partial {
    fn new(n: usize) -> Self {
        Partial {
            w: vec![0.0; n],
            w2: vec![0.0; n],
            total: 0.0,
            total2: 0.0,
            occ: vec![0.0; n],
            occ2: vec![0.0; n],
        }
    }
}

/// Uniform on `(0, 1]`.
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct Chain {
    n: usize,
    q: Vec<f64>,
    /// Cumulative jump intensities out of each state.
    cumulative: Vec<Vec<f64>>,
    kill: Vec<f64>,
}

impl Chain {
    fn new(spec: &JumpChainSpec) -> Self {
        let n = spec.len();
        let cumulative: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let mut acc = 0.0;
                (0..n)
                    .map(|t| {
                        if t != j {
                            acc += spec.rates[(t, j)];
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        Chain {
            n,
            q: cumulative.iter().map(|c| c[n - 1]).collect(),
            cumulative,
            kill: spec.kill.iter().copied().collect(),
        }
    }

    fn run(&self, start: usize, horizon: f64, paths: usize, rng: &mut ChaCha8Rng) -> Partial {
        let mut p = Partial::new(self.n);
        let mut occ = vec![0.0; self.n];
        for _ in 0..paths {
            occ.iter_mut().for_each(|o| *o = 0.0);
            let mut y = start;
            let mut t = 0.0;
            let mut log_w = 0.0;
            loop {
                let q = self.q[y];
                let hold = if q > 0.0 { -uniform(rng).ln() / q } else { f64::INFINITY };
                if t + hold >= horizon {
                    let dt = horizon - t;
                    log_w -= self.kill[y] * dt;
                    occ[y] += dt;
                    break;
                }
                log_w -= self.kill[y] * hold;
                occ[y] += hold;
                t += hold;
                let target = uniform(rng) * q;
                // first state whose cumulative intensity reaches the target; since
                // target > 0 it always has a positive rate (never y itself)
                let next = self.cumulative[y].partition_point(|&v| v < target);
                y = next;
            }
            let w = log_w.exp();
            p.w[y] += w;
            p.w2[y] += w * w;
            p.total += w;
            p.total2 += w * w;
            for j in 0..self.n {
                let f = occ[j] / horizon;
                p.occ[j] += f;
                p.occ2[j] += f * f;
            }
        }
        p
    }
}

fn stderr(sum: f64, sum2: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let raw = sum2 / nf - mean * mean;
    // below the cancellation noise of the two sums the variance is zero
    let var = if raw <= 8.0 * f64::EPSILON * sum2 / nf { 0.0 } else { raw * nf / (nf - 1.0) };
    (var / nf).sqrt()
}

/// Runs `n_paths` paths from every starting state to horizon `L`.
pub fn simulate_feynman_kac(spec: &JumpChainSpec, horizon: f64, n_paths: usize) -> Result<MCEstimate> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidHorizon(horizon));
    }
    if n_paths == 0 {
        return Err(Error::InvalidParameter("n_paths must be ≥ 1".into()));
    }
    let n = spec.len();
    let chain = Chain::new(spec);
    let chunks = n_paths.div_ceil(CHUNK);
    let work: Vec<(usize, usize)> = (0..n).flat_map(|l| (0..chunks).map(move |c| (l, c))).collect();
    let partials: Vec<Partial> = work
        .par_iter()
        .map(|&(l, c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(((l as u64) << 32) | c as u64);
            let paths = CHUNK.min(n_paths - c * CHUNK);
            chain.run(l, horizon, paths, &mut rng)
        })
        .collect();

    let mut mean = DMatrix::zeros(n, n);
    let mut se = DMatrix::zeros(n, n);
    let mut total = DVector::zeros(n);
    let mut total_se = DVector::zeros(n);
    let mut occ = Partial::new(n);
    for l in 0..n {
        let mut acc = Partial::new(n);
        for p in &partials[l * chunks..(l + 1) * chunks] {
            for j in 0..n {
                acc.w[j] += p.w[j];
                acc.w2[j] += p.w2[j];
                occ.occ[j] += p.occ[j];
                occ.occ2[j] += p.occ2[j];
            }
            acc.total += p.total;
            acc.total2 += p.total2;
        }
        for j in 0..n {
            mean[(j, l)] = acc.w[j] / n_paths as f64;
            se[(j, l)] = stderr(acc.w[j], acc.w2[j], n_paths);
        }
        total[l] = acc.total / n_paths as f64;
        total_se[l] = stderr(acc.total, acc.total2, n_paths);
    }
    let all = n * n_paths;
    Ok(MCEstimate {
        mean,
        stderr: se,
        n_paths,
        local_time_fraction: DVector::from_iterator(n, occ.occ.iter().map(|s| s / all as f64)),
        local_time_stderr: DVector::from_iterator(n, (0..n).map(|j| stderr(occ.occ[j], occ.occ2[j], all))),
        total,
        total_stderr: total_se,
    })
}

/// Slope of `ln` of the total surviving weight against the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeEstimate {
    pub slope: f64,
    /// Standard error of the weighted least-squares slope.
    pub stderr: f64,
    /// `(L, ln total, stderr of ln total)` per horizon.
    pub points: Vec<(f64, f64, f64)>,
}

/// Fits `ln E[W_L]` (uniform initial law) over the horizons in `horizons`,
/// each simulated with an independent seed derived from `spec.seed`.
pub fn occupation_slope(spec: &JumpChainSpec, horizons: &[f64], n_paths: usize) -> Result<SlopeEstimate> {
    if horizons.len() < 2 || horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("horizons must be strictly increasing with at least two entries".into()));
    }
    let n = spec.len() as f64;
    let mut points = Vec::with_capacity(horizons.len());
    for (i, &horizon) in horizons.iter().enumerate() {
        let seed = spec.seed.wrapping_add((i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let est = simulate_feynman_kac(&spec.with_seed(seed), horizon, n_paths)?;
        let mean = est.total.sum() / n;
        let se = (est.total_stderr.iter().map(|s| s * s).sum::<f64>()).sqrt() / n;
        if !(mean > 0.0) {
            return Err(Error::InvalidHorizon(horizon));
        }
        points.push((horizon, mean.ln(), se / mean));
    }
    let exact = points.iter().all(|p| p.2 == 0.0);
    if exact {
        let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.0, p.1)).collect();
        return Ok(SlopeEstimate {
            slope: least_squares_slope(&pts),
            stderr: 0.0,
            points,
        });
    }
    let floor = points.iter().map(|p| p.2).filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = points.iter().map(|p| 1.0 / p.2.max(floor).powi(2)).collect();
    let sw: f64 = w.iter().sum();
    let mx = points.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let my = points.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.0 - mx) * (p.1 - my)).sum();
    Ok(SlopeEstimate {
        slope: sxy / sxx,
        stderr: (1.0 / sxx).sqrt(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(g: &[(usize, usize, f64)], kill: &[f64], seed: u64) -> JumpChainSpec {
        let n = kill.len();
        let mut r = DMatrix::zeros(n, n);
        for &(a, b, v) in g {
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
        JumpChainSpec::new(r, DVector::from_column_slice(kill), seed).unwrap()
    }

    #[test]
    fn no_jumps_is_exact() {
        let s = spec(&[], &[0.3, 0.0], 1);
        let e = simulate_feynman_kac(&s, 2.0, 100).unwrap();
        assert!((e.mean[(0, 0)] - (-0.6f64).exp()).abs() < 1e-14);
        assert_eq!(e.stderr[(0, 0)], 0.0);
        assert_eq!(e.mean[(1, 1)], 1.0);
        assert_eq!(e.mean[(1, 0)], 0.0);
    }

    #[test]
    fn lossless_columns_sum_to_one() {
        let s = spec(&[(0, 1, 0.7), (1, 2, 1.3)], &[0.0; 3], 5);
        let e = simulate_feynman_kac(&s, 3.0, 5000).unwrap();
        for l in 0..3 {
            assert!((e.mean.column(l).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn jumps_avoid_zero_rate_states() {
        // state 1 is only reachable from state 2: starting at 0 never visits 2 via 1 directly
        let s = spec(&[(0, 1, 1.0), (1, 2, 1.0)], &[0.0; 3], 9);
        let e = simulate_feynman_kac(&s, 0.05, 20000).unwrap();
        // two jumps are needed to reach state 2 from 0: probability O(L²)
        assert!(e.mean[(2, 0)] < 5e-3);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = spec(&[(0, 1, 0.7), (1, 2, 1.3)], &[0.1, 0.0, 0.4], 42);
        let a = simulate_feynman_kac(&s, 3.0, 3000).unwrap();
        let b = simulate_feynman_kac(&s, 3.0, 3000).unwrap();
        assert_eq!(a, b);
        let c = simulate_feynman_kac(&s.with_seed(43), 3.0, 3000).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn rejects_bad_horizon() {
        let s = spec(&[(0, 1, 1.0)], &[0.0, 0.0], 0);
        assert_eq!(simulate_feynman_kac(&s, 0.0, 10), Err(Error::InvalidHorizon(0.0)));
    }

    #[test]
    fn uniform_kill_slope() {
        let s = spec(&[(0, 1, 0.7), (1, 2, 1.3)], &[0.25; 3], 3);
        let fit = occupation_slope(&s, &[1.0, 2.0, 4.0], 200).unwrap();
        assert!((fit.slope + 0.25).abs() < 1e-12);
    }
}
