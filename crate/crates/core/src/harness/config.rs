//! Flat key-value experiment configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::aggregation::{AggregationParams, LAMBDA_PRIME};
use crate::deployment::{DeploymentSpec, Distribution};
use crate::phy::SinrParams;
use crate::protocol::{ProtocolError, ProtocolParams, DEFAULT_S};
use crate::spanner::{BuildMode, DEFAULT_C_SPAN};

/// Largest network size allowed without `long_run`.
pub const DESK_SCALE_MAX_N: usize = 1000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {msg}")]
    BadValue { key: String, value: String, msg: String },
    #[error("n = {0} exceeds {DESK_SCALE_MAX_N}; set long_run to allow it")]
    NeedsLongRun(usize),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpannerModeKey {
    Oracle,
    Distributed,
}

impl FromStr for SpannerModeKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "distributed" => Ok(Self::Distributed),
            _ => Err("expected oracle or distributed".into()),
        }
    }
}

/// Every key of the config file; CLI flags use the same names.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub label: String,
    pub n: usize,
    pub distribution: Distribution,
    pub width: f64,
    pub height: f64,
    pub normal_sd_frac: f64,
    pub exp_mean_frac: f64,
    pub alpha: f64,
    pub beta: f64,
    pub noise: f64,
    /// Derived from `sigma` when absent.
    pub mu: Option<u64>,
    /// Smallest valid integer for the channel when absent.
    pub sigma: Option<f64>,
    pub p_hat: Option<f64>,
    pub spanner_mode: SpannerModeKey,
    pub c_span: u64,
    /// Phase length of the distributed MIS; defaults to one round.
    pub phase_slots: Option<u64>,
    pub s: usize,
    pub epochs: usize,
    /// Crashes per second as a fraction of `n`.
    pub crash_rate: f64,
    pub tx_per_node: usize,
    pub invalid_rate: f64,
    pub empty_blocks: bool,
    pub seeds: Vec<u64>,
    pub long_run: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            label: "run".into(),
            n: 500,
            distribution: Distribution::Uniform,
            width: 150.0,
            height: 150.0,
            normal_sd_frac: 1.0 / 6.0,
            exp_mean_frac: 0.25,
            alpha: 3.0,
            beta: 3.0,
            noise: 1.0,
            mu: None,
            sigma: None,
            p_hat: None,
            spanner_mode: SpannerModeKey::Oracle,
            c_span: DEFAULT_C_SPAN,
            phase_slots: None,
            s: DEFAULT_S,
            epochs: 5,
            crash_rate: 0.01,
            tx_per_node: 1,
            invalid_rate: 0.0,
            empty_blocks: true,
            seeds: (0..20).collect(),
            long_run: false,
        }
    }
}

/// Parses `1,2,5` or a half-open range `0..20`.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
        if a >= b {
            return Err(format!("empty range {s}"));
        }
        return Ok((a..b).collect());
    }
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse().map_err(|e| format!("{e}"))).collect()
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        msg: e.to_string(),
    })
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&text)
    }

    /// Overrides one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "label" => self.label = value.to_string(),
            "n" => self.n = parse(key, value)?,
            "distribution" => self.distribution = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "normal_sd_frac" => self.normal_sd_frac = parse(key, value)?,
            "exp_mean_frac" => self.exp_mean_frac = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "noise" => self.noise = parse(key, value)?,
            "mu" => self.mu = Some(parse(key, value)?),
            "sigma" => self.sigma = Some(parse(key, value)?),
            "p_hat" => self.p_hat = Some(parse(key, value)?),
            "spanner_mode" => self.spanner_mode = parse(key, value)?,
            "c_span" => self.c_span = parse(key, value)?,
            "phase_slots" => self.phase_slots = Some(parse(key, value)?),
            "s" => self.s = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "crash_rate" => self.crash_rate = parse(key, value)?,
            "tx_per_node" => self.tx_per_node = parse(key, value)?,
            "invalid_rate" => self.invalid_rate = parse(key, value)?,
            "empty_blocks" => self.empty_blocks = parse(key, value)?,
            "seeds" => {
                self.seeds = parse_seed_list(value).map_err(|msg| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                    msg,
                })?
            }
            "long_run" => self.long_run = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    pub fn sinr(&self) -> SinrParams<f64> {
        SinrParams {
            alpha: self.alpha,
            beta: self.beta,
            noise: self.noise,
        }
    }

    pub fn aggregation(&self) -> AggregationParams {
        let sinr = self.sinr();
        let mut a = match self.sigma {
            Some(sigma) => AggregationParams::with_sigma(sigma),
            None => AggregationParams::for_sinr(&sinr),
        };
        if let Some(p_hat) = self.p_hat {
            a.p_hat = p_hat;
            a.mu = (2.0 / p_hat).ceil() as u64;
        }
        if let Some(mu) = self.mu {
            a.mu = mu;
        }
        a.lambda_prime = LAMBDA_PRIME;
        a
    }

    pub fn protocol_params(&self) -> ProtocolParams<f64> {
        let sinr = self.sinr();
        let aggregation = self.aggregation();
        let n = self.n.max(1);
        let spanner_mode = match self.spanner_mode {
            SpannerModeKey::Oracle => BuildMode::Oracle { c_span: self.c_span },
            SpannerModeKey::Distributed => BuildMode::Distributed {
                sinr,
                p: aggregation.p(),
                phase_slots: self.phase_slots.unwrap_or_else(|| aggregation.round_slots(n)),
            },
        };
        ProtocolParams {
            sinr,
            aggregation,
            spanner_mode,
            s: self.s,
            tx_per_node: self.tx_per_node,
            invalid_rate: self.invalid_rate,
            empty_blocks: self.empty_blocks,
        }
    }

    pub fn deployment(&self, seed: u64) -> DeploymentSpec<f64> {
        let mut d = DeploymentSpec::new(self.distribution, self.width, self.height, self.n, seed);
        d.normal_sd_frac = self.normal_sd_frac;
        d.exp_mean_frac = self.exp_mean_frac;
        d
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n > DESK_SCALE_MAX_N && !self.long_run {
            return Err(ConfigError::NeedsLongRun(self.n));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("seed list is empty".into()));
        }
        if !self.crash_rate.is_finite() || self.crash_rate < 0.0 {
            return Err(ConfigError::Invalid(format!("crash_rate {}", self.crash_rate)));
        }
        self.deployment(0).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.protocol_params().validate()?;
        Ok(())
    }
}
