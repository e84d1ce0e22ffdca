//! Run configuration files.
//!
//! A config is a flat TOML document; every key is optional except `model`.
//! See the README for the full schema.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use fblf_core::controller::{ControllerConfig, RobustMode, Theorem};
use fblf_core::plant::{self, Plant};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
}

fn field(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: String,
    theorem: Option<u8>,
    mode: Option<String>,
    eps: Option<f64>,
    #[serde(rename = "b_V")]
    b_v: Option<f64>,
    b_e: Option<f64>,
    gamma: Option<f64>,
    theta_bar: Option<f64>,
    #[serde(rename = "K")]
    iterations: Option<usize>,
    #[serde(rename = "N")]
    steps: Option<usize>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    output_dir: Option<PathBuf>,
    emit_svg: Option<bool>,
    allow_discontinuous_theorem2: Option<bool>,
}

pub const DEFAULT_B_V: f64 = 0.5;
pub const DEFAULT_B_E: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 2.0;
pub const DEFAULT_THETA_BAR: f64 = 1.0;
pub const DEFAULT_ITERATIONS: usize = 30;
pub const DEFAULT_STEPS: usize = 2000;
pub const DEFAULT_HORIZON: f64 = 2.0 * PI;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: String,
    pub theorem: Theorem,
    pub mode: RobustMode,
    /// `b_V` for Model I, `b_e` for Model II (squared internally).
    pub barrier: f64,
    pub gamma: f64,
    pub theta_bar: f64,
    pub iterations: usize,
    pub steps: usize,
    pub horizon: f64,
    pub output_dir: PathBuf,
    pub emit_svg: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::validate(raw)
    }

    fn validate(raw: RawConfig) -> Result<Self, ConfigError> {
        let model_two = match raw.model.as_str() {
            "scalar-I" => false,
            "scalar-II" => true,
            other => {
                return Err(field(
                    "model",
                    format!("unknown model `{other}` (expected scalar-I or scalar-II)"),
                ))
            }
        };
        let theorem = match raw.theorem.unwrap_or(1) {
            1 => Theorem::One,
            2 => Theorem::Two,
            n => return Err(field("theorem", format!("expected 1 or 2, got {n}"))),
        };
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(field(name, format!("must be positive, got {v}")))
            }
        };
        let mode = match raw.mode.as_deref().unwrap_or("disc") {
            "disc" => RobustMode::Discontinuous,
            "cont" => {
                let eps = raw
                    .eps
                    .ok_or_else(|| field("eps", "required when mode = \"cont\""))?;
                RobustMode::Continuous {
                    eps: positive("eps", eps)?,
                }
            }
            other => {
                return Err(field(
                    "mode",
                    format!("expected disc or cont, got `{other}`"),
                ))
            }
        };
        if let Some(eps) = raw.eps {
            positive("eps", eps)?;
        }
        if theorem == Theorem::Two
            && mode == RobustMode::Discontinuous
            && !raw.allow_discontinuous_theorem2.unwrap_or(false)
        {
            return Err(field(
                "mode",
                "theorem 2 needs mode = \"cont\" (or allow_discontinuous_theorem2 = true)",
            ));
        }
        let barrier = if model_two {
            if raw.b_v.is_some() {
                return Err(field("b_V", "scalar-II is bounded through b_e"));
            }
            positive("b_e", raw.b_e.unwrap_or(DEFAULT_B_E))?
        } else {
            if raw.b_e.is_some() {
                return Err(field("b_e", "scalar-I is bounded through b_V"));
            }
            positive("b_V", raw.b_v.unwrap_or(DEFAULT_B_V))?
        };
        let iterations = raw.iterations.unwrap_or(DEFAULT_ITERATIONS);
        if iterations == 0 {
            return Err(field("K", "must be positive"));
        }
        let steps = raw.steps.unwrap_or(DEFAULT_STEPS);
        if steps < 2 {
            return Err(field("N", format!("need at least 2 steps, got {steps}")));
        }
        Ok(RunConfig {
            model: raw.model,
            theorem,
            mode,
            barrier,
            gamma: positive("gamma", raw.gamma.unwrap_or(DEFAULT_GAMMA))?,
            theta_bar: positive("theta_bar", raw.theta_bar.unwrap_or(DEFAULT_THETA_BAR))?,
            iterations,
            steps,
            horizon: positive("T", raw.horizon.unwrap_or(DEFAULT_HORIZON))?,
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            emit_svg: raw.emit_svg.unwrap_or(false),
        })
    }

    pub fn plant(&self) -> Result<Plant, ConfigError> {
        plant::builtin(&self.model)
            .ok_or_else(|| field("model", format!("unknown model `{}`", self.model)))?
            .with_horizon(self.horizon)
            .map_err(|e| field("T", e.to_string()))
    }

    /// The bound the barrier is evaluated against: `b_V`, or `b_e²`.
    pub fn internal_bound(&self) -> f64 {
        if self.model == "scalar-II" {
            self.barrier * self.barrier
        } else {
            self.barrier
        }
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            mode: self.mode,
            bound: self.internal_bound(),
            gamma: self.gamma,
            theta_bar: self.theta_bar,
        }
    }
}
