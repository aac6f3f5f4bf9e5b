//! Run configuration: a TOML document with fixed sections, patched by
//! `--override section.key=value` before it is deserialized and validated.

use serde::{Deserialize, Serialize};

use oqsim_core::env_model::{CouplingMethod, SpectralDensity};

/// A schema or value problem in the configuration, reported with its field.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SchemaError {}

fn schema<T>(field: &str, reason: impl std::fmt::Display) -> Result<T, SchemaError> {
    Err(SchemaError(format!("{field}: {reason}")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: System,
    pub bath: Bath,
    pub evolution: Evolution,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub readout: Readout,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct System {
    pub omega_s: f64,
    /// `rate-scan` sweeps `omega_s` over `scan_points` values in `[scan_min, scan_max]`.
    #[serde(default = "default_scan_min")]
    pub scan_min: f64,
    #[serde(default = "default_scan_max")]
    pub scan_max: f64,
    #[serde(default = "default_scan_points")]
    pub scan_points: usize,
}

fn default_scan_min() -> f64 {
    0.85
}
fn default_scan_max() -> f64 {
    1.10
}
fn default_scan_points() -> usize {
    6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Couplings {
    Naive,
    Improved,
    ImprovedNonneg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bath {
    /// Ohmic `J(ω) = 2παω e^{-ω/ω_c}` unless `spectral_file` names a
    /// two-column tabulation.
    pub alpha: f64,
    pub omega_c: f64,
    #[serde(default)]
    pub spectral_file: Option<String>,
    /// Inverse temperature; `inf` for a cold bath.
    pub beta: f64,
    pub omega_min: f64,
    pub spacing: f64,
    pub modes: usize,
    pub couplings: Couplings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Joint,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    DensityMatrix,
    Trajectories,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Evolution {
    pub tau: f64,
    /// Simulated time in units of `T1 = 2/J(ω_s)`.
    #[serde(default = "default_horizon")]
    pub horizon_t1: f64,
    /// Explicit evolve-reset step (or sweep) count; overrides `horizon_t1`.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "default_mode")]
    pub mode: ModeKind,
    #[serde(default = "default_subset")]
    pub subset_size: usize,
    #[serde(default = "default_n0")]
    pub n0: usize,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_horizon() -> f64 {
    3.0
}
fn default_mode() -> ModeKind {
    ModeKind::Joint
}
fn default_subset() -> usize {
    1
}
fn default_n0() -> usize {
    64
}
fn default_backend() -> BackendKind {
    BackendKind::DensityMatrix
}
fn default_trajectories() -> usize {
    200
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctuatorSpec {
    pub v: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    /// Explicit fluctuators; when empty a log-uniform ensemble of `count`
    /// fluctuators on `[gamma_min, gamma_max]` with amplitude `v` is drawn.
    #[serde(default)]
    pub fluctuators: Vec<FluctuatorSpec>,
    pub count: usize,
    pub v: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub duration: f64,
    pub dt: f64,
    pub realizations: usize,
    pub stride: usize,
    /// Length of the single long record used for the spectrum estimate.
    pub spectrum_duration: f64,
    pub max_lag: usize,
}

impl Default for Noise {
    fn default() -> Self {
        Self {
            fluctuators: vec![FluctuatorSpec { v: 0.1, gamma: 1.0 }],
            count: 200,
            v: 0.01,
            gamma_min: 1e-3,
            gamma_max: 10.0,
            duration: 200.0,
            dt: 0.05,
            realizations: 500,
            stride: 20,
            spectrum_duration: 2e4,
            max_lag: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadoutKind {
    Expectation,
    Shots,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Readout {
    pub mode: ReadoutKind,
    pub shots: u64,
}

impl Default for Readout {
    fn default() -> Self {
        Self {
            mode: ReadoutKind::Expectation,
            shots: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub dir: String,
    /// Prepended to every output file name.
    #[serde(default)]
    pub prefix: String,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            prefix: String::new(),
        }
    }
}

/// Configuration text after overrides, kept for hashing and echoing.
pub struct Loaded {
    pub config: Config,
    pub canonical: String,
}

pub fn load(text: &str, overrides: &[String]) -> Result<Loaded, SchemaError> {
    let mut doc: toml::Table = match text.parse() {
        Ok(t) => t,
        Err(e) => return schema("config", e.message()),
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let canonical = toml::to_string(&doc).map_err(|e| SchemaError(format!("config: {e}")))?;
    let config: Config = match toml::Value::Table(doc).try_into() {
        Ok(c) => c,
        Err(e) => return schema("config", e.to_string().trim()),
    };
    config.validate()?;
    Ok(Loaded { config, canonical })
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), SchemaError> {
    let Some((path, raw)) = spec.split_once('=') else {
        return schema("--override", format!("expected key=value, got `{spec}`"));
    };
    let path: Vec<&str> = path.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return schema("--override", format!("malformed key in `{spec}`"));
    }
    // bare words that are not TOML literals are taken as strings
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
        table = match entry.as_table_mut() {
            Some(t) => t,
            None => return schema(p, "is not a section"),
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn positive(field: &str, x: f64) -> Result<(), SchemaError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        schema(field, format!("must be positive and finite, got {x}"))
    }
}

fn at_least_one(field: &str, n: usize) -> Result<(), SchemaError> {
    if n >= 1 {
        Ok(())
    } else {
        schema(field, "must be at least 1")
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), SchemaError> {
        let s = &self.system;
        positive("system.omega_s", s.omega_s)?;
        positive("system.scan_min", s.scan_min)?;
        positive("system.scan_max", s.scan_max)?;
        if s.scan_max < s.scan_min {
            return schema("system.scan_max", "must not be below scan_min");
        }
        at_least_one("system.scan_points", s.scan_points)?;

        let b = &self.bath;
        if b.spectral_file.is_none() {
            positive("bath.alpha", b.alpha)?;
            positive("bath.omega_c", b.omega_c)?;
        }
        if b.beta.is_nan() || b.beta < 0.0 {
            return schema("bath.beta", format!("must be non-negative, got {}", b.beta));
        }
        positive("bath.omega_min", b.omega_min)?;
        positive("bath.spacing", b.spacing)?;
        at_least_one("bath.modes", b.modes)?;

        let e = &self.evolution;
        positive("evolution.tau", e.tau)?;
        positive("evolution.horizon_t1", e.horizon_t1)?;
        if let Some(m) = e.steps {
            at_least_one("evolution.steps", m)?;
        }
        at_least_one("evolution.n0", e.n0)?;
        at_least_one("evolution.stride", e.stride)?;
        if e.mode == ModeKind::Sequential && (e.subset_size == 0 || !b.modes.is_multiple_of(e.subset_size)) {
            return schema(
                "evolution.subset_size",
                format!("must divide bath.modes = {}, got {}", b.modes, e.subset_size),
            );
        }
        if e.backend == BackendKind::Trajectories {
            at_least_one("evolution.trajectories", e.trajectories)?;
        }

        let n = &self.noise;
        for (i, f) in n.fluctuators.iter().enumerate() {
            if !(f.v.is_finite() && f.gamma >= 0.0 && f.gamma.is_finite()) {
                return schema(&format!("noise.fluctuators[{i}]"), "needs finite v and gamma ≥ 0");
            }
        }
        if n.fluctuators.is_empty() {
            at_least_one("noise.count", n.count)?;
            positive("noise.gamma_min", n.gamma_min)?;
            if n.gamma_max <= n.gamma_min {
                return schema("noise.gamma_max", "must exceed gamma_min");
            }
        }
        positive("noise.duration", n.duration)?;
        positive("noise.dt", n.dt)?;
        positive("noise.spectrum_duration", n.spectrum_duration)?;
        at_least_one("noise.realizations", n.realizations)?;
        at_least_one("noise.stride", n.stride)?;
        at_least_one("noise.max_lag", n.max_lag)?;
        if n.dt > n.duration {
            return schema("noise.dt", "must not exceed noise.duration");
        }
        if (n.max_lag as f64) * n.dt >= n.spectrum_duration {
            return schema("noise.max_lag", "window must be shorter than the spectrum record");
        }

        if self.readout.mode == ReadoutKind::Shots && self.readout.shots == 0 {
            return schema("readout.shots", "must be at least 1");
        }
        if self.output.dir.is_empty() {
            return schema("output.dir", "must not be empty");
        }
        Ok(())
    }

    pub fn spectral_density(&self) -> oqsim_core::Result<SpectralDensity> {
        match &self.bath.spectral_file {
            Some(path) => SpectralDensity::load_tabulated(path),
            None => SpectralDensity::ohmic(self.bath.alpha, self.bath.omega_c),
        }
    }

    pub fn coupling_method(&self) -> CouplingMethod {
        let tau = self.evolution.tau;
        match self.bath.couplings {
            Couplings::Naive => CouplingMethod::Naive,
            Couplings::Improved => CouplingMethod::Improved { tau },
            Couplings::ImprovedNonneg => CouplingMethod::ImprovedNonNegative { tau },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUNDLED: &str = include_str!("../configs/worked_example.toml");

    #[test]
    fn bundled_config_is_valid() {
        let l = load(BUNDLED, &[]).unwrap();
        assert_eq!(l.config.bath.modes, 8);
        assert_eq!(l.config.bath.couplings, Couplings::ImprovedNonneg);
        assert_eq!(l.config.evolution.tau, 30.0);
    }

    #[test]
    fn override_replaces_nested_value() {
        let l = load(BUNDLED, &["evolution.tau=12.5".into(), "evolution.mode=joint".into()]).unwrap();
        assert_eq!(l.config.evolution.tau, 12.5);
        assert_eq!(l.config.evolution.mode, ModeKind::Joint);
        assert!(l.canonical.contains("tau = 12.5"));
    }

    #[test]
    fn negative_tau_names_the_field() {
        let e = load(BUNDLED, &["evolution.tau=-1".into()]).err().unwrap();
        assert!(e.0.starts_with("evolution.tau:"), "{e}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(load(BUNDLED, &["bath.colour=1".into()]).is_err());
        assert!(load(BUNDLED, &["no_equals_sign".into()]).is_err());
    }

    #[test]
    fn subset_must_divide_modes() {
        let e = load(BUNDLED, &["evolution.subset_size=3".into()]).err().unwrap();
        assert!(e.0.starts_with("evolution.subset_size"));
    }
}
