//! Pipeline execution. Each pipeline writes its CSV tables into the output
//! directory and returns the lines of `summary.txt`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use wavemode::coupling::CouplingCoefficients;
use wavemode::decay::{decay_rate, fit_slope, regime_sweep, Regime};
use wavemode::diffusion::{
    continuum_limit_check, fit_mass_slope, solve_diffusion, sturm_liouville_spectrum, ContinuumCheck,
};
use wavemode::montecarlo::{occupation_slope, simulate_feynman_kac};
use wavemode::pekeris::solve_modes;
use wavemode::power::{solve_coupled_power, solve_coupled_power_rk, total_energy, RkTolerance};
use wavemode::{BoundaryCondition, DiffusionCoefficient, JumpChainSpec, ModeSet, PowerSystem, WaveguideParams};

use crate::config::{Pipeline, PowerMethod, Scenario};

#[derive(Debug)]
pub enum RunError {
    Numerical(wavemode::Error),
    Io(std::io::Error),
}

impl From<wavemode::Error> for RunError {
    fn from(e: wavemode::Error) -> Self {
        RunError::Numerical(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

type Summary = Vec<String>;

fn create(dir: &Path, name: &str) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn uniform_grid(z_max: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| z_max * i as f64 / (points - 1) as f64).collect()
}

pub fn run(scenario: &Scenario, out: &Path) -> Result<Summary, RunError> {
    let c = &scenario.config;
    match c.pipeline {
        Pipeline::Modes => modes(scenario, out),
        Pipeline::Coefficients => coefficients(scenario, out),
        Pipeline::Power => power(scenario, out),
        Pipeline::Decay => decay(scenario, out),
        Pipeline::Montecarlo => montecarlo(scenario, out),
        Pipeline::Diffusion => diffusion(scenario, out),
        Pipeline::ContinuumCheck => continuum(scenario, out),
        Pipeline::RegimeSweep => regimes(scenario, out),
    }
}

fn write_modes(modes: &ModeSet, out: &Path) -> std::io::Result<()> {
    let mut w = create(out, "modes.csv")?;
    writeln!(w, "j,sigma,beta,zeta,amplitude")?;
    for j in 0..modes.len() {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e}",
            j + 1,
            modes.sigma[j],
            modes.beta[j],
            modes.zeta[j],
            modes.amplitude[j]
        )?;
    }
    w.flush()
}

fn mode_summary(params: &WaveguideParams, modes: &ModeSet) -> Summary {
    let mut s = vec![
        format!("N = {}", modes.len()),
        format!("k = {:e}", params.k()),
        format!("theta = {:e}", params.theta()),
    ];
    s.extend(modes.warnings.iter().map(|w| format!("warning: {w}")));
    s
}

fn modes(sc: &Scenario, out: &Path) -> Result<Summary, RunError> {
    let modes = solve_modes(&sc.waveguide)?;
    write_modes(&modes, out)?;
    Ok(mode_summary(&sc.waveguide, &modes))
}

fn write_matrix(out: &Path, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    let mut w = create(out, name)?;
    writeln!(w, "j,l,value")?;
    for j in 0..m.nrows() {
        for l in 0..m.ncols() {
            writeln!(w, "{},{},{:e}", j + 1, l + 1, m[(j, l)])?;
        }
    }
    w.flush()
}

fn coefficients(sc: &Scenario, out: &Path) -> Result<Summary, RunError> {
    let modes = solve_modes(&sc.waveguide)?;
    write_modes(&modes, out)?;
    let c = CouplingCoefficients::compute(&modes, &sc.medium)?;
    write_matrix(out, "gamma_c.csv", &c.gamma_c)?;
    write_matrix(out, "gamma_s.csv", &c.gamma_s)?;
    write_matrix(out, "gamma_1.csv", &c.gamma_1)?;
    let mut w = create(out, "vectors.csv")?;
    writeln!(w, "j,lambda_c,lambda_s,kappa,kappa_cutoff,kappa_tail_bound")?;
    for j in 0..c.len() {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e}",
            j + 1,
            c.lambda_c[j],
            c.lambda_s[j],
            c.kappa.values[j],
            c.kappa.cutoff[j],
            c.kappa.tail_bound[j]
        )?;
    }
    w.flush()?;
    let mut s = mode_summary(&sc.waveguide, &modes);
    s.push(format!("min Lambda_c = {:e}", c.lambda_c.min()));
    s.push(format!("mean Lambda_c = {:e}", c.lambda_c.mean()));
    Ok(s)
}

fn system(sc: &Scenario) -> Result<(ModeSet, PowerSystem), RunError> {
    let modes = solve_modes(&sc.waveguide)?;
    let system = PowerSystem::from_medium(&modes, &sc.medium)?;
    Ok((modes, system))
}

fn power(sc: &Scenario, out: &Path) -> Result<Summary, RunError> {
    let (modes, system) = system(sc)?;
    let p = &sc.config.power;
    let grid = uniform_grid(p.z_max, p.z_points);
    let traj = match p.method {
        PowerMethod::Expm => solve_coupled_power(&system, &grid)?,
        PowerMethod::Rk => solve_coupled_power_rk(&system, &grid, RkTolerance::default())?,
    };
    traj.write_csv(create(out, "power.csv")?)?;
    let mut s = mode_summary(&sc.waveguide, &modes);
    let energy = total_energy(&traj, 1)?;
    s.push(format!("total energy from mode 1 at z = {:e}: {:e}", p.z_max, energy.last().unwrap()));
    Ok(s)
}

fn decay(sc: &Scenario, out: &Path) -> Result<Summary, RunError> {
    let (modes, system) = system(sc)?;
    let d = &sc.config.decay;
    let analysis = decay_rate(&system)?;
    let l = modes.check_index(d.start_mode)? + 1;
    let loss = system.loss();
    let mut w = create(out, "decay.csv")?;
    writeln!(w, "j,lambda_c,minimizer")?;
    for j in 0..modes.len() {
        writeln!(w, "{},{:e},{:e}", j + 1, loss[j], analysis.minimizer[j])?;
    }
    w.flush()?;

    let mut s = mode_summary(&sc.waveguide, &modes);
    s.push(format!(
        "min Lambda <= Lambda_inf <= mean Lambda: {:e} <= {:e} <= {:e}",
        analysis.lower_bound, analysis.lambda_inf, analysis.upper_bound
    ));
    s.push(format!("spectral gap = {:e}", analysis.spectral_gap));
    if analysis.spectral_gap.is_finite() && analysis.spectral_gap > 0.0 {
        let z_min = d.gap_product / analysis.spectral_gap;
        let grid: Vec<f64> = std::iter::once(0.0)
            .chain((0..d.fit_points).map(|i| z_min * (1.0 + i as f64 / (d.fit_points - 1) as f64)))
            .collect();
        let traj = solve_coupled_power(&system, &grid)?;
        let energy = total_energy(&traj, l)?;
        let mut w = create(out, "energy.csv")?;
        writeln!(w, "z,total")?;
        for (z, e) in grid.iter().zip(&energy) {
            writeln!(w, "{z:e},{e:e}")?;
        }
        w.flush()?;
        let slope = fit_slope(&traj, &analysis, l, z_min)?;
        s.push(format!("fitted slope = {slope:e}"));
    }
    Ok(s)
}

fn montecarlo(sc: &Scenario, out: &Path) -> Result<Summary, RunError> {
    let (modes, system) = system(sc)?;
    let m = &sc.config.montecarlo;
    let spec = JumpChainSpec::from_system(&system, sc.config.seed);
    let est = simulate_feynman_kac(&spec, m.horizon, m.n_paths)?;
    let exact = &solve_coupled_power(&system, &[0.0, m.horizon])?.t[1];
    let n = modes.len();
    let mut w = create(out, "montecarlo.csv")?;
    writeln!(w, "j,l,mean,stderr,deterministic")?;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for l in 0..n {
            let (mean, se, ex) = (est.mean[(j, l)], est.stderr[(j, l)], exact[(j, l)]);
            writeln!(w, "{},{},{mean:e},{se:e},{ex:e}", j + 1, l + 1)?;
            if se > 0.0 {
                worst = worst.max((mean - ex).abs() / se);
            }
        }
    }
    w.flush()?;
    let mut w = create(out, "local_time.csv")?;
    writeln!(w, "j,fraction,stderr")?;
    for j in 0..n {
        writeln!(w, "{},{:e},{:e}", j + 1, est.local_time_fraction[j], est.local_time_stderr[j])?;
    }
    w.flush()?;
    let mut s = mode_summary(&sc.waveguide, &modes);
    s.push(format!("paths per starting mode = {}", est.n_paths));
    s.push(format!("max |MC - deterministic| / stderr = {worst:.3}"));
    if !m.slope_horizons.is_empty() {
        let slope = occupation_slope(&spec, &m.slope_horizons, m.n_paths)?;
        let lambda = decay_rate(&system)?.lambda_inf;
        s.push(format!("occupation slope = {:e} +- {:e}", slope.slope, slope.stderr));
        s.push(format!("Lambda_inf = {lambda:e}"));
    }
    Ok(s)
}

fn diffusion(sc: &Scenario, out: &Path) -> Result<Summary, RunError> {
    let d = &sc.config.diffusion;
    let coeff = DiffusionCoefficient::from_medium(&sc.waveguide, &sc.medium)?;
    let bc: BoundaryCondition = d.bc.into();
    let grid = uniform_grid(d.z_max / coeff.a0, d.z_points);
    let phi = d.initial;
    let sol = solve_diffusion(&coeff, |u| phi.eval(u), bc, &grid, d.u_resolution)?;
    sol.write_csv(create(out, "diffusion.csv")?)?;
    let spectrum = sturm_liouville_spectrum(&coeff, bc, d.n_eigs, d.u_resolution)?;
    spectrum.write_csv(create(out, "spectrum.csv")?)?;
    let mut s = vec![
        format!("a0 = {:e}", coeff.a0),
        format!("S0 = {:e}", coeff.s0),
        format!("boundary = {}", bc.name()),
        format!("temporal error estimate = {:e}", sol.temporal_error),
    ];
    let leading = if bc == BoundaryCondition::NeumannNeumann { 1 } else { 0 };
    if let Some(l1) = spectrum.eigenvalues.get(leading) {
        s.push(format!("lambda_1 = {l1:e}"));
        if bc == BoundaryCondition::NeumannDirichlet {
            s.push(format!("continuum decay rate = {:e}", -l1));
            if let Some(l2) = spectrum.eigenvalues.get(1) {
                let z_min = 10.0 / (l1 - l2);
                if z_min < *grid.last().unwrap() {
                    s.push(format!("fitted slope = {:e}", fit_mass_slope(&sol, z_min)?));
                }
            }
        }
    }
    Ok(s)
}

fn continuum(sc: &Scenario, out: &Path) -> Result<Summary, RunError> {
    let c = &sc.config.continuum;
    let w = &sc.waveguide;
    let ladder = c
        .ladder
        .iter()
        .map(|&n| WaveguideParams::with_mode_ratio(w.n1(), w.d(), n as f64 + 0.5))
        .collect::<Result<Vec<_>, _>>()?;
    let phi = c.initial;
    let mut file = create(out, "convergence.csv")?;
    writeln!(file, "bc,n_modes,z,distance")?;
    let mut s = Vec::new();
    for &bc in &c.bc {
        let bc: BoundaryCondition = bc.into();
        let opts = ContinuumCheck {
            bc,
            z_values: c.z_values.clone(),
            u_resolution: c.u_resolution,
        };
        let rows = continuum_limit_check(&ladder, &sc.medium, |u| phi.eval(u), &opts)?;
        for r in &rows {
            writeln!(file, "{},{},{:e},{:e}", bc.name(), r.n_modes, r.z, r.distance)?;
        }
        for &z in &c.z_values {
            let d: Vec<String> = rows
                .iter()
                .filter(|r| r.z == z)
                .map(|r| format!("N={}: {:.3e}", r.n_modes, r.distance))
                .collect();
            s.push(format!("L2 distance {} z = {z}: {}", bc.name(), d.join(", ")));
        }
    }
    file.flush()?;
    Ok(s)
}

fn regimes(sc: &Scenario, out: &Path) -> Result<Summary, RunError> {
    let (modes, system) = system(sc)?;
    let r = &sc.config.regime;
    let mut w = create(out, "regime.csv")?;
    writeln!(w, "regime,tau,lambda_inf,observed,target,relative_error")?;
    let mut s = mode_summary(&sc.waveguide, &modes);
    for name in &r.regimes {
        let regime: Regime = name.parse()?;
        let points = regime_sweep(&system, &r.taus, regime)?;
        for p in &points {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e}",
                regime.name(),
                p.tau,
                p.lambda_inf,
                p.observed,
                p.target,
                p.relative_error()
            )?;
        }
        if let Some(p) = points.last() {
            s.push(format!(
                "{} at tau = {:e}: observed {:e}, limit {:e}, relative error {:.3e}",
                regime.name(),
                p.tau,
                p.observed,
                p.target,
                p.relative_error()
            ));
        }
    }
    w.flush()?;
    Ok(s)
}
