//! Experiment configuration: a TOML file, optionally patched by
//! `key=value` overrides, validated into an [`ExperimentConfig`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use optofock::dynamics::OdeOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Initial mechanical state. Full-model runs put the optical mode in vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InitialState {
    Vacuum,
    /// Thermal state at the bath occupancy `nbar_m`.
    #[default]
    Thermal,
    Fock(usize),
    /// Real coherent amplitude, truncated to the simulated space.
    Coherent(f64),
}

impl FromStr for InitialState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "vacuum" => return Ok(Self::Vacuum),
            "thermal" => return Ok(Self::Thermal),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("fock:") {
            return k.trim().parse().map(Self::Fock).map_err(|e| format!("bad Fock level `{k}`: {e}"));
        }
        if let Some(a) = s.strip_prefix("coherent:") {
            let alpha: f64 = a.trim().parse().map_err(|e| format!("bad coherent amplitude `{a}`: {e}"))?;
            if !alpha.is_finite() {
                return Err(format!("coherent amplitude must be finite, got {alpha}"));
            }
            return Ok(Self::Coherent(alpha));
        }
        Err(format!("unknown initial state `{s}` (expected vacuum | thermal | fock:k | coherent:alpha)"))
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Vacuum => write!(f, "vacuum"),
            Self::Thermal => write!(f, "thermal"),
            Self::Fock(k) => write!(f, "fock:{k}"),
            Self::Coherent(a) => write!(f, "coherent:{a:?}"),
        }
    }
}

impl Serialize for InitialState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InitialState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How the cavity decay rate is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Regime {
    /// `κ = kappa_over_chi · χ_ref`, solved with the effective phonon model.
    BadCavity {
        #[serde(default = "default_bad_ratio")]
        kappa_over_chi: f64,
    },
    /// `κ = kappa_over_chi · χ_ref`, solved with the full two-mode model.
    GoodCavity {
        #[serde(default = "default_good_ratio")]
        kappa_over_chi: f64,
    },
    /// Fixed `κ` (units of `ω_m`); the model follows the regime test
    /// `κ ≥ 10 χ_ref`.
    Explicit { kappa: f64 },
}

fn default_bad_ratio() -> f64 {
    20.0
}

fn default_good_ratio() -> f64 {
    1.0
}

/// Quantity on the sweep axis; the mechanical damping is `γ = value · rate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    GammaOverKappaEff,
    GammaOverKappa,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GammaOverKappaEff => "gamma_over_kappa_eff",
            Self::GammaOverKappa => "gamma_over_kappa",
        })
    }
}

/// Sweep values, either listed or log-spaced between `min` and `max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl SweepSpec {
    /// The sweep values, strictly positive and strictly increasing.
    pub fn resolve(&self) -> Result<Vec<f64>, ConfigError> {
        let values = match (&self.values, self.min, self.max, self.count) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(lo), Some(hi), Some(n)) => log_spaced(lo, hi, n)?,
            _ => {
                return Err(ConfigError::Invalid(
                    "sweep needs either `values` or all of `min`, `max`, `count`".into(),
                ))
            }
        };
        if values.is_empty() {
            return Err(ConfigError::Invalid("sweep has no values".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(ConfigError::Invalid(format!("sweep value {v} is not strictly positive")));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::Invalid("sweep values must be strictly increasing".into()));
        }
        Ok(values)
    }
}

/// `count` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>, ConfigError> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) || count < 2 {
        return Err(ConfigError::Invalid(format!(
            "log spacing needs 0 < min < max and count >= 2 (min={lo}, max={hi}, count={count})"
        )));
    }
    let (a, b) = (lo.log10(), hi.log10());
    let mut v: Vec<f64> = (0..count).map(|k| 10f64.powf(a + (b - a) * k as f64 / (count - 1) as f64)).collect();
    // pin the endpoints exactly
    v[0] = lo;
    v[count - 1] = hi;
    Ok(v)
}

/// Hilbert-space truncations; unset values take model-dependent defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_optical: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_mech: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
}

fn default_rtol() -> f64 {
    OdeOptions::default().rtol
}

fn default_atol() -> f64 {
    OdeOptions::default().atol
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: default_rtol(), atol: default_atol() }
    }
}

/// When the null-space steady state is confirmed by a long evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossCheckMode {
    /// Dense propagator for small systems, backward Euler otherwise.
    #[default]
    Auto,
    /// Adaptive Runge–Kutta over the whole horizon (slow for long horizons).
    RungeKutta,
    /// Skip the time-domain confirmation.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_extent: Option<f64>,
}

fn default_points() -> usize {
    optofock::metrics::DEFAULT_GRID_POINTS
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { points: default_points(), half_extent: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    /// Final time in units of `1/κ_eff`.
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Number of intervals; the output has `samples + 1` rows.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_t_final() -> f64 {
    10.0
}

fn default_samples() -> usize {
    50
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { t_final: default_t_final(), samples: default_samples() }
    }
}

fn default_sideband() -> u32 {
    1
}

fn default_drive() -> f64 {
    optofock::model::DEFAULT_DRIVE
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Target phonon number `M`.
    pub target: usize,
    #[serde(default = "default_sideband")]
    pub sideband: u32,
    /// Drive amplitude `Ω` in units of `ω_m`.
    #[serde(default = "default_drive")]
    pub drive: f64,
    #[serde(default)]
    pub nbar_m: f64,
    #[serde(default)]
    pub nbar_c: f64,
    #[serde(default)]
    pub initial: InitialState,
    /// Axis value for single-point commands (`evolve`, `wigner`, `audit`);
    /// defaults to the first sweep value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<f64>,
    /// Reserved; every solver is deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub cross_check: CrossCheckMode,
    pub regime: Regime,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
}

impl ExperimentConfig {
    /// Parses, validates and returns a config from TOML text.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::with_overrides(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides (dotted keys address
    /// nested tables, values are TOML literals or bare strings), then
    /// validates.
    pub fn with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::with_overrides(&text, overrides).map_err(|e| match e {
            ConfigError::Parse(msg) => ConfigError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.target == 0 || self.target > optofock::calibration::MAX_TARGET {
            return bad(format!("target must be in 1..={}, got {}", optofock::calibration::MAX_TARGET, self.target));
        }
        if self.sideband != 1 {
            return bad(format!("only sideband = 1 is supported, got {}", self.sideband));
        }
        for (name, v) in [("drive", self.drive), ("nbar_m", self.nbar_m), ("nbar_c", self.nbar_c)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if !(self.drive > 0.0) {
            return bad("drive must be positive".into());
        }
        match self.regime {
            Regime::BadCavity { kappa_over_chi } | Regime::GoodCavity { kappa_over_chi } => {
                if !(kappa_over_chi.is_finite() && kappa_over_chi > 0.0) {
                    return bad(format!("kappa_over_chi must be positive, got {kappa_over_chi}"));
                }
            }
            Regime::Explicit { kappa } => {
                if !(kappa.is_finite() && kappa > 0.0) {
                    return bad(format!("kappa must be positive, got {kappa}"));
                }
            }
        }
        self.sweep.resolve()?;
        if let Some(p) = self.point {
            if !(p.is_finite() && p >= 0.0) {
                return bad(format!("point must be finite and nonnegative, got {p}"));
            }
        }
        if let Some(n) = self.truncation.n_optical {
            if n < 2 {
                return bad(format!("n_optical must be at least 2, got {n}"));
            }
        }
        if let Some(n) = self.truncation.n_mech {
            if n < self.target + 1 {
                return bad(format!("n_mech = {n} cannot hold the target |{}>", self.target));
            }
        }
        if let InitialState::Fock(k) = self.initial {
            if k > self.target {
                return bad(format!("initial Fock level {k} exceeds the target {}", self.target));
            }
        }
        let t = self.tolerances;
        if !(t.rtol > 0.0 && t.atol > 0.0 && t.rtol.is_finite() && t.atol.is_finite()) {
            return bad(format!("tolerances must be positive (rtol={}, atol={})", t.rtol, t.atol));
        }
        if self.grid.points < 5 {
            return bad(format!("grid.points must be at least 5, got {}", self.grid.points));
        }
        if let Some(h) = self.grid.half_extent {
            if !(h.is_finite() && h > 0.0) {
                return bad(format!("grid.half_extent must be positive, got {h}"));
            }
        }
        if !(self.evolve.t_final.is_finite() && self.evolve.t_final > 0.0) || self.evolve.samples == 0 {
            return bad("evolve needs t_final > 0 and samples >= 1".into());
        }
        Ok(())
    }

    /// Canonical TOML text of the config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// SHA-256 of the canonical TOML text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Short form of [`hash`](Self::hash) used in table rows.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }

    /// Axis value for single-point commands.
    pub fn single_point(&self) -> f64 {
        self.point.unwrap_or_else(|| self.sweep.resolve().expect("validated")[0])
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(spec.into()));
    }
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("nonempty key");
    let mut current = table;
    for part in parts {
        let entry = current.entry(part).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        current = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("override `{key}`: `{part}` is not a table")))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

/// A TOML literal if `raw` parses as one, otherwise a plain string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
target = 5
[regime]
kind = "bad-cavity"
[sweep]
axis = "gamma_over_kappa_eff"
min = 1e-6
max = 1e-2
count = 13
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.regime, Regime::BadCavity { kappa_over_chi: 20.0 });
        assert_eq!(c.initial, InitialState::Thermal);
        assert_eq!(c.sweep.resolve().unwrap().len(), 13);
        assert_eq!(c.single_point(), 1e-6);
    }

    #[test]
    fn round_trip_is_lossless() {
        let mut c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        c.initial = InitialState::Coherent(0.7);
        c.point = Some(1e-4);
        c.truncation.n_mech = Some(9);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let o = ["regime.kappa_over_chi=40".to_string(), "initial=fock:2".into(), "target=6".into()];
        let c = ExperimentConfig::with_overrides(MINIMAL, &o).unwrap();
        assert_eq!(c.regime, Regime::BadCavity { kappa_over_chi: 40.0 });
        assert_eq!(c.initial, InitialState::Fock(2));
        assert_eq!(c.target, 6);
        let base = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_ne!(c.hash(), base.hash());
    }

    #[test]
    fn errors_carry_positions_and_reasons() {
        let err = ExperimentConfig::from_toml("target = 5\nbogus = 1\n[regime]\nkind = \"bad-cavity\"\n").unwrap_err();
        assert!(err.to_string().contains("bogus") || err.to_string().contains("line"), "{err}");
        let err = ExperimentConfig::from_toml(&MINIMAL.replace("min = 1e-6", "min = -1")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
        let err = ExperimentConfig::from_toml("target = 5\n[regime\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(ExperimentConfig::with_overrides(MINIMAL, &["nonsense".into()]).is_err());
    }

    #[test]
    fn sweep_values_must_increase() {
        let s = SweepSpec { axis: Axis::GammaOverKappa, values: Some(vec![1e-3, 1e-4]), min: None, max: None, count: None };
        assert!(s.resolve().is_err());
        let s = SweepSpec { values: Some(vec![1e-4, 1e-3]), ..s };
        assert_eq!(s.resolve().unwrap(), vec![1e-4, 1e-3]);
    }

    #[test]
    fn log_spacing_hits_decades() {
        let v = log_spaced(1e-6, 1e-2, 13).unwrap();
        assert_eq!(v[0], 1e-6);
        assert_eq!(v[12], 1e-2);
        assert!((v[6] - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn initial_state_strings() {
        for s in ["vacuum", "thermal", "fock:3", "coherent:1.5"] {
            let v: InitialState = s.parse().unwrap();
            assert_eq!(v.to_string().parse::<InitialState>().unwrap(), v);
        }
        assert!("fock:x".parse::<InitialState>().is_err());
        assert!("squeezed".parse::<InitialState>().is_err());
    }
}
