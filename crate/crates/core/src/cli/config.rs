//! Strict TOML run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fbm::{FbmMethod, HurstParam};
use crate::frac::ExponentTriple;
use crate::grid::TimeGrid;
use crate::registry;
use crate::solver::{Scheme, SolverConfig};

/// Every key accepted in a config file.
pub const FIELDS: [&str; 23] = [
    "model",
    "x0",
    "t_end",
    "steps",
    "particles",
    "hurst",
    "epsilon",
    "scheme",
    "sub_steps_per_osc",
    "method",
    "seed",
    "force",
    "alpha",
    "beta",
    "gamma",
    "lambda",
    "epsilons",
    "replicates",
    "averaging_window",
    "phi_t_min",
    "phi_t_max",
    "phi_points",
    "output_prefix",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Registry key of the coefficient pair.
    pub model: String,
    pub x0: f64,
    pub t_end: f64,
    pub steps: usize,
    pub particles: usize,
    pub hurst: f64,
    pub epsilon: f64,
    pub scheme: Scheme,
    pub sub_steps_per_osc: usize,
    pub method: FbmMethod,
    pub seed: u64,
    /// Run even if assumption validation fails.
    pub force: bool,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilons: Vec<f64>,
    pub replicates: usize,
    /// Build the averaged drift numerically over this window instead of
    /// using the registry's closed form.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub averaging_window: Option<f64>,
    pub phi_t_min: f64,
    pub phi_t_max: f64,
    pub phi_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_prefix: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "benchmark".into(),
            x0: 0.0,
            t_end: 1.0,
            steps: 256,
            particles: 256,
            hurst: 0.7,
            epsilon: 0.01,
            scheme: Scheme::Euler,
            sub_steps_per_osc: 2,
            method: FbmMethod::Circulant,
            seed: 42,
            force: false,
            alpha: 0.4,
            beta: 0.65,
            gamma: 0.55,
            lambda: 1.0,
            epsilons: vec![1.0, 0.1, 0.01, 0.001],
            replicates: 64,
            averaging_window: None,
            phi_t_min: 10.0,
            phi_t_max: 1000.0,
            phi_points: 25,
            output_prefix: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("unknown key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey { key: String, suggestion: Option<String> },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, message: message.into() }
}

fn suggest(key: &str) -> Option<String> {
    FIELDS
        .iter()
        .map(|f| (strsim::damerau_levenshtein(key, f), *f))
        .filter(|(d, f)| *d <= 2.max(f.len() / 3))
        .min()
        .map(|(_, f)| f.to_string())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        if let Some(key) = table.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(ConfigError::UnknownKey { key: key.clone(), suggestion: suggest(key) });
        }
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        registry::lookup::<f64>(&self.model).map_err(|e| invalid("model", e.to_string()))?;
        HurstParam::young(self.hurst).map_err(|e| invalid("hurst", e.to_string()))?;
        if !self.x0.is_finite() {
            return Err(invalid("x0", "must be finite"));
        }
        TimeGrid::new(self.t_end, self.steps).map_err(|e| invalid("t_end", e.to_string()))?;
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        if self.particles < 2 {
            return Err(invalid("particles", "need at least 2 particles"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if self.sub_steps_per_osc == 0 {
            return Err(invalid("sub_steps_per_osc", "must be at least 1"));
        }
        ExponentTriple::new(self.alpha, self.beta, self.gamma).map_err(|e| invalid("alpha/beta/gamma", e.to_string()))?;
        if !(self.beta < self.hurst) {
            return Err(invalid("beta", format!("must be below hurst ({} ≥ {})", self.beta, self.hurst)));
        }
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be at least 1"));
        }
        if self.epsilons.is_empty()
            || self.epsilons.iter().any(|e| !(*e > 0.0))
            || self.epsilons.windows(2).any(|w| !(w[1] < w[0]))
        {
            return Err(invalid("epsilons", "must be non-empty, positive and strictly decreasing"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        if let Some(w) = self.averaging_window {
            if !(w > 0.0 && w.is_finite()) {
                return Err(invalid("averaging_window", "must be positive"));
            }
        }
        if !(self.phi_t_min > 0.0 && self.phi_t_max > self.phi_t_min && self.phi_t_max.is_finite()) {
            return Err(invalid("phi_t_min", "need 0 < phi_t_min < phi_t_max"));
        }
        if self.phi_points < 2 {
            return Err(invalid("phi_points", "need at least 2 windows"));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> crate::Result<SolverConfig<f64>> {
        let grid = TimeGrid::new(self.t_end, self.steps)?;
        let mut cfg = SolverConfig::new(self.x0, self.epsilon, self.particles, grid, HurstParam::young(self.hurst)?, self.seed);
        cfg.scheme = self.scheme;
        cfg.sub_steps_per_osc = self.sub_steps_per_osc;
        cfg.method = self.method;
        cfg.force = self.force;
        Ok(cfg)
    }
}
