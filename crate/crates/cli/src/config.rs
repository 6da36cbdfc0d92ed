//! Scenario files: TOML with a fixed schema. Unknown keys are rejected and
//! every error carries the line it refers to.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use wavemode::medium::KernelTable;
use wavemode::{CovarianceSpec, Kernel, WaveguideParams};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: Option<usize>, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    Modes,
    Coefficients,
    Power,
    Decay,
    Montecarlo,
    Diffusion,
    ContinuumCheck,
    RegimeSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub pipeline: Pipeline,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub waveguide: WaveguideSection,
    pub medium: MediumSection,
    #[serde(default)]
    pub power: PowerSection,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub montecarlo: MonteCarloSection,
    #[serde(default)]
    pub diffusion: DiffusionSection,
    #[serde(default)]
    pub continuum: ContinuumSection,
    #[serde(default)]
    pub regime: RegimeSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

fn default_seed() -> u64 {
    1
}

/// `k` or `mode_ratio = n1·k·d·θ/π` (both only if they agree); the resolved
/// configuration carries both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideSection {
    pub n1: f64,
    pub d: f64,
    pub k: Option<f64>,
    pub mode_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    pub a: f64,
    /// `"default"`, `"none"` or a number.
    #[serde(default = "default_cutoff")]
    pub spectral_cutoff: Cutoff,
    pub terms: Vec<Term>,
}

fn default_cutoff() -> Cutoff {
    Cutoff::Keyword("default".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cutoff {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    Constant {
        value: f64,
    },
    CosineBand {
        amplitude: f64,
    },
    GaussianBump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// CSV table `x,y,value`, path relative to the config file.
    Table {
        path: PathBuf,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMethod {
    Expm,
    Rk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSection {
    pub z_max: f64,
    pub z_points: usize,
    pub method: PowerMethod,
}

impl Default for PowerSection {
    fn default() -> Self {
        PowerSection {
            z_max: 1.0,
            z_points: 101,
            method: PowerMethod::Expm,
        }
    }
}

/// The fit window is `[gap_product/gap, 2·gap_product/gap]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySection {
    pub gap_product: f64,
    pub fit_points: usize,
    pub start_mode: usize,
}

impl Default for DecaySection {
    fn default() -> Self {
        DecaySection {
            gap_product: 10.0,
            fit_points: 41,
            start_mode: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    pub horizon: f64,
    pub n_paths: usize,
    /// Horizons of the occupation slope fit; empty to skip it.
    pub slope_horizons: Vec<f64>,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        MonteCarloSection {
            horizon: 1.0,
            n_paths: 100_000,
            slope_horizons: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    /// `cos(πu/2)`
    Cosine,
    /// 1 on `[0, 1/2]`, 0 elsewhere
    Step,
    Uniform,
}

impl Initial {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Initial::Cosine => (std::f64::consts::PI * u / 2.0).cos(),
            Initial::Step => {
                if u <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            Initial::Uniform => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Lossy,
    Lossless,
}

impl From<Boundary> for wavemode::BoundaryCondition {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::Lossy => wavemode::BoundaryCondition::NeumannDirichlet,
            Boundary::Lossless => wavemode::BoundaryCondition::NeumannNeumann,
        }
    }
}

/// Distances are in units of `1/a0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionSection {
    pub bc: Boundary,
    pub initial: Initial,
    pub z_max: f64,
    pub z_points: usize,
    pub u_resolution: usize,
    pub n_eigs: usize,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        DiffusionSection {
            bc: Boundary::Lossy,
            initial: Initial::Cosine,
            z_max: 1.0,
            z_points: 101,
            u_resolution: 256,
            n_eigs: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuumSection {
    /// Mode counts; each waveguide uses `mode_ratio = N + 1/2` with the
    /// configured `n1` and `d`.
    pub ladder: Vec<usize>,
    pub z_values: Vec<f64>,
    pub bc: Vec<Boundary>,
    pub initial: Initial,
    pub u_resolution: usize,
}

impl Default for ContinuumSection {
    fn default() -> Self {
        ContinuumSection {
            ladder: vec![25, 50, 100, 200],
            z_values: vec![0.1, 1.0, 5.0],
            bc: vec![Boundary::Lossy, Boundary::Lossless],
            initial: Initial::Cosine,
            u_resolution: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimeSection {
    pub regimes: Vec<String>,
    pub taus: Vec<f64>,
}

impl Default for RegimeSection {
    fn default() -> Self {
        RegimeSection {
            regimes: vec!["strong_coupling".into(), "weak_coupling".into(), "weak_loss".into()],
            taus: vec![1e-1, 1e-2, 1e-3, 1e-4],
        }
    }
}

/// A validated scenario with the library objects it describes.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub waveguide: WaveguideParams,
    pub medium: CovarianceSpec,
}

/// Line of `key` inside `[section]` (or `[[section]]`), or of the section
/// header itself when `key` is empty.
fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section && header_line.is_none() {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    if key.is_empty() {
        header_line
    } else {
        header_line.or_else(|| if section.is_empty() { None } else { locate(source, "", key) })
    }
}

fn line_of_span(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

fn positive(source: &str, section: &str, key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::at(
            locate(source, section, key),
            format!("{section}.{key} must be a positive number, got {v}"),
        ))
    }
}

fn nonempty_positive(source: &str, section: &str, key: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(ConfigError::at(
            locate(source, section, key),
            format!("{section}.{key} must be a nonempty list of positive numbers"),
        ));
    }
    Ok(())
}

/// Parses and validates a scenario. Relative table paths are resolved
/// against `base_dir`.
pub fn parse(source: &str, base_dir: &Path) -> Result<Scenario, ConfigError> {
    let mut config: ScenarioConfig = toml::from_str(source).map_err(|e| {
        let line = e.span().map(|s| line_of_span(source, s.start));
        ConfigError::at(line, e.message().to_string())
    })?;

    let w = &config.waveguide;
    positive(source, "waveguide", "d", w.d)?;
    if !(w.n1.is_finite() && w.n1 > 1.0) {
        return Err(ConfigError::at(
            locate(source, "waveguide", "n1"),
            format!("waveguide.n1 must exceed 1, got {}", w.n1),
        ));
    }
    let waveguide = match (w.k, w.mode_ratio) {
        (Some(k), None) => {
            positive(source, "waveguide", "k", k)?;
            WaveguideParams::new(w.n1, w.d, k)
        }
        (None, Some(r)) => {
            positive(source, "waveguide", "mode_ratio", r)?;
            WaveguideParams::with_mode_ratio(w.n1, w.d, r)
        }
        (Some(k), Some(r)) => {
            positive(source, "waveguide", "k", k)?;
            let p = WaveguideParams::new(w.n1, w.d, k);
            if let Ok(p) = &p {
                let implied = p.n1() * p.k() * p.d() * p.theta() / std::f64::consts::PI;
                if (implied - r).abs() > 1e-9 * r.abs() {
                    return Err(ConfigError::at(
                        locate(source, "waveguide", "mode_ratio"),
                        format!("waveguide.k implies mode_ratio = {implied}, but {r} is given"),
                    ));
                }
            }
            p
        }
        (None, None) => {
            return Err(ConfigError::at(
                locate(source, "waveguide", ""),
                "give waveguide.k or waveguide.mode_ratio",
            ))
        }
    }
    .map_err(|e| ConfigError::at(locate(source, "waveguide", ""), e.to_string()))?;
    config.waveguide.k = Some(waveguide.k());
    config.waveguide.mode_ratio = Some(waveguide.n1() * waveguide.k() * waveguide.d() * waveguide.theta() / std::f64::consts::PI);

    let medium = build_medium(source, &mut config.medium, waveguide.d(), base_dir)?;
    validate_sections(source, &config)?;
    Ok(Scenario {
        config,
        waveguide,
        medium,
    })
}

fn build_medium(source: &str, m: &mut MediumSection, d: f64, base_dir: &Path) -> Result<CovarianceSpec, ConfigError> {
    positive(source, "medium", "a", m.a)?;
    let terms_line = locate(source, "medium.terms", "");
    if m.terms.is_empty() {
        return Err(ConfigError::at(locate(source, "medium", ""), "medium needs at least one [[medium.terms]] entry"));
    }
    let mut kernels = Vec::new();
    for term in &m.terms {
        kernels.push(match term {
            Term::Constant { value } => Kernel::Constant { value: *value },
            Term::CosineBand { amplitude } => Kernel::CosineBand { amplitude: *amplitude },
            Term::GaussianBump {
                amplitude,
                center,
                width,
            } => Kernel::GaussianBump {
                amplitude: *amplitude,
                center: *center,
                width: *width,
            },
            Term::Table { path, scale } => {
                let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
                let table = KernelTable::from_csv_path(&full)
                    .map_err(|e| ConfigError::at(locate(source, "medium.terms", "path"), format!("{}: {e}", full.display())))?;
                Kernel::Table(table).scaled(*scale)
            }
        });
    }
    let kernel = if kernels.len() == 1 { kernels.pop().unwrap() } else { Kernel::Sum(kernels) };
    let spec = CovarianceSpec::new(kernel, m.a, d).map_err(|e| ConfigError::at(terms_line, e.to_string()))?;
    let spec = match &m.spectral_cutoff {
        Cutoff::Keyword(k) if k == "default" => spec,
        Cutoff::Keyword(k) if k == "none" => spec.with_spectral_cutoff(None).expect("removing the cutoff cannot fail"),
        Cutoff::Value(v) => spec
            .with_spectral_cutoff(Some(*v))
            .map_err(|e| ConfigError::at(locate(source, "medium", "spectral_cutoff"), e.to_string()))?,
        Cutoff::Keyword(other) => {
            return Err(ConfigError::at(
                locate(source, "medium", "spectral_cutoff"),
                format!("spectral_cutoff must be \"default\", \"none\" or a number, got \"{other}\""),
            ))
        }
    };
    m.spectral_cutoff = match spec.spectral_cutoff() {
        Some(v) => Cutoff::Value(v),
        None => Cutoff::Keyword("none".into()),
    };
    Ok(spec)
}

fn at_least(source: &str, section: &str, key: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(ConfigError::at(
            locate(source, section, key),
            format!("{section}.{key} must be at least {min}, got {v}"),
        ))
    }
}

fn validate_sections(source: &str, c: &ScenarioConfig) -> Result<(), ConfigError> {
    positive(source, "power", "z_max", c.power.z_max)?;
    at_least(source, "power", "z_points", c.power.z_points, 2)?;
    positive(source, "decay", "gap_product", c.decay.gap_product)?;
    at_least(source, "decay", "fit_points", c.decay.fit_points, 2)?;
    at_least(source, "decay", "start_mode", c.decay.start_mode, 1)?;
    positive(source, "montecarlo", "horizon", c.montecarlo.horizon)?;
    at_least(source, "montecarlo", "n_paths", c.montecarlo.n_paths, 2)?;
    if !c.montecarlo.slope_horizons.is_empty() {
        nonempty_positive(source, "montecarlo", "slope_horizons", &c.montecarlo.slope_horizons)?;
    }
    positive(source, "diffusion", "z_max", c.diffusion.z_max)?;
    at_least(source, "diffusion", "z_points", c.diffusion.z_points, 2)?;
    at_least(source, "diffusion", "u_resolution", c.diffusion.u_resolution, 32)?;
    at_least(source, "diffusion", "n_eigs", c.diffusion.n_eigs, 1)?;
    if c.diffusion.n_eigs > c.diffusion.u_resolution / 4 {
        return Err(ConfigError::at(
            locate(source, "diffusion", "n_eigs"),
            "diffusion.n_eigs must not exceed u_resolution/4",
        ));
    }
    if c.continuum.ladder.len() < 2 || c.continuum.ladder.iter().any(|&n| n == 0) {
        return Err(ConfigError::at(
            locate(source, "continuum", "ladder"),
            "continuum.ladder needs at least two positive mode counts",
        ));
    }
    nonempty_positive(source, "continuum", "z_values", &c.continuum.z_values)?;
    if c.continuum.bc.is_empty() {
        return Err(ConfigError::at(locate(source, "continuum", "bc"), "continuum.bc must not be empty"));
    }
    at_least(source, "continuum", "u_resolution", c.continuum.u_resolution, 32)?;
    for r in &c.regime.regimes {
        r.parse::<wavemode::decay::Regime>()
            .map_err(|e| ConfigError::at(locate(source, "regime", "regimes"), e.to_string()))?;
    }
    nonempty_positive(source, "regime", "taus", &c.regime.taus)?;
    Ok(())
}

/// `manifest.txt`: the resolved configuration, itself a valid scenario file.
pub fn manifest(config: &ScenarioConfig) -> String {
    let body = toml::to_string(config).expect("scenario configuration serialises");
    format!(
        "# wavemode {} resolved scenario\n# seed = {}\n{body}",
        env!("CARGO_PKG_VERSION"),
        config.seed
    )
}
