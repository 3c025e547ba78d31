//! Run configuration files (JSON or TOML).
//!
//! Recognized keys — anything else is rejected:
//!
//! | key            | meaning                                              | default |
//! |----------------|------------------------------------------------------|---------|
//! | `a`, `b`       | damping and stiffness                                | 1, 0.2  |
//! | `N`            | number of modes (with `preset`)                      | 10      |
//! | `preset`       | `"wave"` or `"plate"`                                | `wave` if no `kappa` |
//! | `kappa`        | explicit increasing eigenvalue list (excludes `preset`) | —    |
//! | `lambda`       | diagonal noise eigenvalues, one per mode             | `lambda_scale / n^lambda_power` |
//! | `lambda_scale`, `lambda_power` | power-law noise spectrum             | 1000, 2 |
//! | `q`            | full symmetric PSD noise matrix (excludes `lambda*`) | —       |
//! | `x0`           | initial state, list of `{u, v}`                      | all `u = v = 1` |
//! | `dt`, `T`      | step and horizon                                     | 0.001, 100 |
//! | `seed`         | seed of a single path, or master seed of a study     | 1       |
//! | `scheme`       | `"euler"` or `"exact"`                               | `euler` |
//! | `reps`         | Monte Carlo replications                             | 100     |

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{builtin_preset, LambdaRule, ModePair, Model, PresetKind};
use crate::simulate::Scheme;

pub const DEFAULT_A: f64 = 1.0;
pub const DEFAULT_B: f64 = 0.2;
pub const DEFAULT_MODES: usize = 10;
pub const DEFAULT_DT: f64 = 0.001;
pub const DEFAULT_HORIZON: f64 = 100.0;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_REPS: usize = 100;

/// Raw configuration; every field optional so command-line flags can fill
/// or override it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub a: Option<f64>,
    pub b: Option<f64>,
    #[serde(rename = "N")]
    pub modes: Option<usize>,
    pub preset: Option<PresetKind>,
    pub kappa: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub lambda_scale: Option<f64>,
    pub lambda_power: Option<f64>,
    pub q: Option<Vec<Vec<f64>>>,
    pub x0: Option<Vec<ModePair>>,
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub scheme: Option<Scheme>,
    pub reps: Option<usize>,
}

/// A configuration with defaults applied and the model built.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedConfig {
    pub model: Model,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub reps: usize,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("invalid JSON config: {e}")))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("invalid TOML config: {e}")))
    }

    /// Reads a `.json` or `.toml` file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("json") => Self::from_json(&text),
            Some("toml") => Self::from_toml(&text),
            _ => Err(Error::Config(format!("{}: config must end in .json or .toml", path.display()))),
        }
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overridden_by(self, other: RunConfig) -> RunConfig {
        RunConfig {
            a: other.a.or(self.a),
            b: other.b.or(self.b),
            modes: other.modes.or(self.modes),
            preset: other.preset.or(self.preset),
            kappa: other.kappa.or(self.kappa),
            lambda: other.lambda.or(self.lambda),
            lambda_scale: other.lambda_scale.or(self.lambda_scale),
            lambda_power: other.lambda_power.or(self.lambda_power),
            q: other.q.or(self.q),
            x0: other.x0.or(self.x0),
            dt: other.dt.or(self.dt),
            horizon: other.horizon.or(self.horizon),
            seed: other.seed.or(self.seed),
            scheme: other.scheme.or(self.scheme),
            reps: other.reps.or(self.reps),
        }
    }

    pub fn build_model(&self) -> Result<Model> {
        let a = self.a.unwrap_or(DEFAULT_A);
        let b = self.b.unwrap_or(DEFAULT_B);
        if self.preset.is_some() && self.kappa.is_some() {
            return Err(Error::Config("give either `preset` or `kappa`, not both".into()));
        }
        if self.kappa.is_some() && self.modes.is_some() {
            return Err(Error::Config("`N` applies to presets only; an explicit `kappa` sets the mode count".into()));
        }
        let power = self.lambda_scale.is_some() || self.lambda_power.is_some();
        if self.q.is_some() && (self.lambda.is_some() || power) {
            return Err(Error::Config("give either `q` or a `lambda` spectrum, not both".into()));
        }
        if self.lambda.is_some() && power {
            return Err(Error::Config("`lambda` excludes `lambda_scale`/`lambda_power`".into()));
        }

        let kappa = match &self.kappa {
            Some(k) => k.clone(),
            None => {
                let kind = self.preset.unwrap_or(PresetKind::Wave);
                let modes = self.modes.unwrap_or(DEFAULT_MODES);
                builtin_preset(kind, modes, a, b, &LambdaRule::default())?.kappa().to_vec()
            }
        };
        let n = kappa.len();
        let x0 = self.x0.clone().unwrap_or_else(|| vec![ModePair::new(1.0, 1.0); n]);
        if let Some(q) = &self.q {
            return Model::new(a, b, kappa, q.clone(), x0);
        }
        let rule = match &self.lambda {
            Some(l) => LambdaRule::Explicit(l.clone()),
            None => LambdaRule::Power {
                scale: self.lambda_scale.unwrap_or(1000.0),
                exponent: self.lambda_power.unwrap_or(2.0),
            },
        };
        Model::diagonal(a, b, kappa, rule.eigenvalues(n)?, x0)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let reps = self.reps.unwrap_or(DEFAULT_REPS);
        Ok(ResolvedConfig {
            model: self.build_model()?,
            dt: self.dt.unwrap_or(DEFAULT_DT),
            horizon: self.horizon.unwrap_or(DEFAULT_HORIZON),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            scheme: self.scheme.unwrap_or(Scheme::Euler),
            reps,
        })
    }
}
