//! JSON run and sweep configuration.
//!
//! ```json
//! {
//!   "grid": {"L": 6.283185307179586, "nx": 64, "ny": 31},
//!   "run": {"dt": 0.01, "t_end": 1.0, "R": 1.0, "a": 1.0, "lambda": 64.0,
//!           "epsilon": 0.1, "mu": 64.0, "snapshot_every": 10,
//!           "calibration": "calibration.json"},
//!   "data": {"delta": 0.001, "profile": "mode1", "seed": 0},
//!   "switches": {"nonlinear": true, "magnetic": true},
//!   "sweep": {"epsilons": [0.2, 0.1, 0.05]}
//! }
//! ```
//! `grid.nx`, `grid.ny`, `run.dt` and `run.t_end` are required. Without a
//! calibration file the product constant is [`DEFAULT_CONSTANT`] and λ
//! defaults to 4C².

use crate::convergence::SweepPlan;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::io::read_calibration;
use crate::monitor::Calibration;
use crate::profiles::Profile;
use crate::record::RunSettings;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

/// Product constant used before any calibration.
pub const DEFAULT_CONSTANT: f64 = 4.0;

const KNOWN: &[(&str, &[&str])] = &[
    ("grid", &["L", "nx", "ny"]),
    ("run", &["dt", "t_end", "R", "a", "lambda", "epsilon", "mu", "snapshot_every", "calibration"]),
    ("data", &["delta", "profile", "seed"]),
    ("switches", &["nonlinear", "magnetic"]),
    ("sweep", &["epsilons"]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    #[serde(rename = "L", default = "two_pi")]
    pub period: f64,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

fn two_pi() -> f64 {
    std::f64::consts::TAU
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSection {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    #[serde(rename = "R")]
    pub growth_rate: Option<f64>,
    pub a: Option<f64>,
    pub lambda: Option<f64>,
    pub epsilon: Option<f64>,
    pub mu: Option<f64>,
    pub snapshot_every: Option<usize>,
    pub calibration: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_profile")]
    pub profile: Profile,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta() -> f64 {
    1e-3
}

fn default_profile() -> Profile {
    Profile::Mode1
}

impl Default for DataSection {
    fn default() -> Self {
        Self { delta: default_delta(), profile: default_profile(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Switches {
    #[serde(default = "yes")]
    pub nonlinear: bool,
    #[serde(default = "yes")]
    pub magnetic: bool,
}

fn yes() -> bool {
    true
}

impl Default for Switches {
    fn default() -> Self {
        Self { nonlinear: true, magnetic: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub grid: GridSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub switches: Switches,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    /// Directory that relative paths (the calibration file) resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Dotted paths of every key not in the schema.
pub fn unknown_keys(value: &Value) -> Vec<String> {
    let mut out = Vec::new();
    let Some(top) = value.as_object() else { return out };
    for (key, sub) in top {
        match KNOWN.iter().find(|(name, _)| name == key) {
            None => out.push(key.clone()),
            Some((_, fields)) => {
                if let Some(obj) = sub.as_object() {
                    out.extend(obj.keys().filter(|k| !fields.contains(&k.as_str())).map(|k| format!("{key}.{k}")));
                }
            }
        }
    }
    out
}

impl Config {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid JSON: {e}")))?;
        if !value.is_object() {
            return Err(Error::Config("configuration must be a JSON object".into()));
        }
        let unknown = unknown_keys(&value);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown keys: {}", unknown.join(", "))));
        }
        if value.get("grid").is_none() {
            return Err(Error::Config("missing section grid".into()));
        }
        let mut cfg: Config = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn calibration(&self) -> Result<Option<Calibration>> {
        match &self.run.calibration {
            None => Ok(None),
            Some(p) => read_calibration(&self.base_dir.join(p)).map(Some),
        }
    }

    /// Fully resolved settings, with λ = 4C² unless given.
    pub fn settings(&self) -> Result<RunSettings> {
        let missing = |k: &str| Error::Config(format!("missing required key {k}"));
        let nx = self.grid.nx.ok_or_else(|| missing("grid.nx"))?;
        let ny = self.grid.ny.ok_or_else(|| missing("grid.ny"))?;
        let dt = self.run.dt.ok_or_else(|| missing("run.dt"))?;
        let t_end = self.run.t_end.ok_or_else(|| missing("run.t_end"))?;
        let constant = self.calibration()?.map_or(DEFAULT_CONSTANT, |c| c.constant);
        let settings = RunSettings {
            grid: GridSpec::new(self.grid.period, nx, ny)?,
            dt,
            t_end,
            a: self.run.a.unwrap_or(1.0),
            lambda: self.run.lambda.unwrap_or(4.0 * constant * constant),
            growth_rate: self.run.growth_rate.unwrap_or(1.0),
            epsilon: self.run.epsilon,
            nonlinear: self.switches.nonlinear,
            magnetic: self.switches.magnetic,
            profile: self.data.profile,
            delta: self.data.delta,
            seed: self.data.seed,
            snapshot_every: self.run.snapshot_every.unwrap_or(1),
            constant,
        };
        settings.validate()?;
        Ok(settings)
    }

    pub fn sweep_plan(&self) -> Result<SweepPlan> {
        let sweep = self.sweep.as_ref().ok_or_else(|| Error::Config("missing section sweep".into()))?;
        let mut base = self.settings()?;
        base.epsilon = None;
        let plan = SweepPlan { epsilons: sweep.epsilons.clone(), base, mu: self.run.mu };
        plan.validate()?;
        Ok(plan)
    }

    /// The resolved configuration as written into manifests.
    pub fn resolved(&self) -> Result<Value> {
        let settings = self.settings()?;
        Ok(serde_json::json!({
            "settings": settings,
            "mu": self.run.mu,
            "calibration": self.run.calibration,
            "sweep": self.sweep,
        }))
    }
}
