//! Seeded multi-trial experiments, parameter sweeps and metric emission.

mod config;
mod emit;

use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::deployment::{generate, DeploymentError, Distribution};
use crate::fault::{CrashSchedule, SLOT_SECONDS};
use crate::protocol::{EpochResult, Network};
use crate::sim::Trace;
use crate::spanner;

pub use config::{parse_seed_list, ConfigError, ExperimentConfig, SpannerModeKey, DESK_SCALE_MAX_N};
pub use emit::{default_output_dir, emit, read_csv, round_sig, EmitError, Format, MetricsRow, OUT_DIR_ENV};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}: {source}")]
    Deployment { seed: u64, source: DeploymentError },
    #[error("bad value `{value}` for axis {axis}: {msg}")]
    BadAxisValue { axis: Axis, value: String, msg: String },
}

/// Transactions per second over `slots` slots of 50 μs.
pub fn throughput(committed_txs: u64, slots: u64) -> f64 {
    if slots == 0 {
        0.0
    } else {
        committed_txs as f64 / (slots as f64 * SLOT_SECONDS)
    }
}

/// One seed's run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialMetrics {
    pub seed: u64,
    pub gamma: f64,
    pub levels: u32,
    pub epochs: Vec<EpochResult>,
    pub persistence_conflicts: usize,
}

impl TrialMetrics {
    pub fn committed_epochs(&self) -> usize {
        self.epochs.iter().filter(|e| e.outcome.is_committed()).count()
    }

    pub fn committed_txs(&self) -> u64 {
        self.epochs.iter().map(|e| e.committed_txs as u64).sum()
    }

    pub fn total_slots(&self) -> u64 {
        self.epochs.iter().map(|e| e.epoch_slots).sum()
    }

    pub fn mean_epoch_slots(&self) -> f64 {
        if self.epochs.is_empty() {
            0.0
        } else {
            self.total_slots() as f64 / self.epochs.len() as f64
        }
    }

    pub fn tps(&self) -> f64 {
        throughput(self.committed_txs(), self.total_slots())
    }
}

/// Metrics of one configuration point, pooled over seeds in seed order.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub label: String,
    pub n: usize,
    pub distribution: Distribution,
    pub alpha: f64,
    pub beta: f64,
    pub trials: Vec<TrialMetrics>,
}

impl RunMetrics {
    pub fn seeds(&self) -> Vec<u64> {
        self.trials.iter().map(|t| t.seed).collect()
    }

    pub fn epoch_slots(&self) -> Vec<u64> {
        self.trials.iter().flat_map(|t| t.epochs.iter().map(|e| e.epoch_slots)).collect()
    }

    pub fn epochs(&self) -> usize {
        self.trials.iter().map(|t| t.epochs.len()).sum()
    }

    pub fn committed_epochs(&self) -> usize {
        self.trials.iter().map(TrialMetrics::committed_epochs).sum()
    }

    pub fn abandoned_epochs(&self) -> usize {
        self.epochs() - self.committed_epochs()
    }

    pub fn committed_txs(&self) -> u64 {
        self.trials.iter().map(TrialMetrics::committed_txs).sum()
    }

    pub fn total_slots(&self) -> u64 {
        self.trials.iter().map(TrialMetrics::total_slots).sum()
    }

    pub fn mean_epoch_slots(&self) -> f64 {
        let e = self.epochs();
        if e == 0 {
            0.0
        } else {
            self.total_slots() as f64 / e as f64
        }
    }

    pub fn mean_gamma(&self) -> f64 {
        if self.trials.is_empty() {
            0.0
        } else {
            self.trials.iter().map(|t| t.gamma).sum::<f64>() / self.trials.len() as f64
        }
    }

    pub fn tps(&self) -> f64 {
        throughput(self.committed_txs(), self.total_slots())
    }

    pub fn persistence_conflicts(&self) -> usize {
        self.trials.iter().map(|t| t.persistence_conflicts).sum()
    }

    pub fn row(&self) -> MetricsRow {
        MetricsRow {
            label: self.label.clone(),
            n: self.n,
            distribution: self.distribution.to_string(),
            alpha: round_sig(self.alpha),
            beta: round_sig(self.beta),
            mean_gamma: round_sig(self.mean_gamma()),
            seeds: self.trials.len(),
            epochs: self.epochs(),
            committed_epochs: self.committed_epochs(),
            abandoned_epochs: self.abandoned_epochs(),
            committed_txs: self.committed_txs(),
            total_slots: self.total_slots(),
            mean_epoch_slots: round_sig(self.mean_epoch_slots()),
            tps: round_sig(self.tps()),
        }
    }
}

// Keeps the placement and protocol streams of a seed apart.
fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `cfg.epochs` epochs for one seed; optionally keeps the slot trace.
pub fn run_trial(cfg: &ExperimentConfig, seed: u64, trace: bool) -> Result<(TrialMetrics, Option<Trace>), HarnessError> {
    let placement = Arc::new(generate(&cfg.deployment(seed)).map_err(|source| HarnessError::Deployment { seed, source })?);
    let params = cfg.protocol_params();
    let schedule = CrashSchedule::from_rate(cfg.crash_rate, cfg.n, mix(seed, 2)).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let gamma = placement.gamma();
    let levels = spanner::level_count(&placement);
    let mut net = Network::new(placement, params, &schedule, mix(seed, 1)).map_err(ConfigError::from)?.with_trace(trace);
    for _ in 0..cfg.epochs {
        net.run_epoch();
    }
    let metrics = TrialMetrics {
        seed,
        gamma,
        levels,
        epochs: net.history().to_vec(),
        persistence_conflicts: net.persistence_conflicts(),
    };
    Ok((metrics, net.take_trace()))
}

/// Runs every seed in parallel; results are ordered by the seed list.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunMetrics, HarnessError> {
    Ok(run_experiment_traced(cfg, false)?.0)
}

/// As [`run_experiment`], also returning the first seed's trace when asked.
pub fn run_experiment_traced(cfg: &ExperimentConfig, trace: bool) -> Result<(RunMetrics, Option<Trace>), HarnessError> {
    cfg.validate()?;
    let results: Vec<(TrialMetrics, Option<Trace>)> = cfg
        .seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| run_trial(cfg, seed, trace && k == 0))
        .collect::<Result<_, _>>()?;
    let mut first_trace = None;
    let mut trials = Vec::with_capacity(results.len());
    for (t, tr) in results {
        if first_trace.is_none() {
            first_trace = tr;
        }
        trials.push(t);
    }
    let metrics = RunMetrics {
        label: cfg.label.clone(),
        n: cfg.n,
        distribution: cfg.distribution,
        alpha: cfg.alpha,
        beta: cfg.beta,
        trials,
    };
    Ok((metrics, first_trace))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Axis {
    N,
    Gamma,
    Alpha,
    Beta,
    Distribution,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::N => "n",
            Axis::Gamma => "gamma",
            Axis::Alpha => "alpha",
            Axis::Beta => "beta",
            Axis::Distribution => "distribution",
        })
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(Axis::N),
            "gamma" => Ok(Axis::Gamma),
            "alpha" => Ok(Axis::Alpha),
            "beta" => Ok(Axis::Beta),
            "distribution" => Ok(Axis::Distribution),
            other => Err(format!("unknown axis `{other}`")),
        }
    }
}

/// Configuration of one sweep point.
///
/// `gamma` sets a square plane of side `Γ/√2`, whose diagonal is the target
/// diameter. On the `alpha`/`beta` axes the base point's aggregation
/// constants are kept so rows differ only in the channel, unless they are
/// invalid for the new channel, in which case that point uses its own
/// defaults.
pub fn sweep_point(base: &ExperimentConfig, axis: Axis, value: &str) -> Result<ExperimentConfig, HarnessError> {
    let bad = |msg: String| HarnessError::BadAxisValue { axis, value: value.to_string(), msg };
    let mut cfg = base.clone();
    cfg.label = format!("{axis}={}", value.trim());
    match axis {
        Axis::N => cfg.n = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
        Axis::Distribution => cfg.distribution = value.parse().map_err(|e| bad(format!("{e}")))?,
        Axis::Gamma => {
            let g: f64 = value.trim().parse().map_err(|e| bad(format!("{e}")))?;
            if !(g > 1.0) {
                return Err(bad("gamma must exceed 1".into()));
            }
            cfg.width = g / 2f64.sqrt();
            cfg.height = cfg.width;
        }
        Axis::Alpha | Axis::Beta => {
            let x: f64 = value.trim().parse().map_err(|e| bad(format!("{e}")))?;
            let pinned = base.aggregation();
            if axis == Axis::Alpha {
                cfg.alpha = x;
            } else {
                cfg.beta = x;
            }
            cfg.sinr().validate().map_err(|e| bad(e.to_string()))?;
            if pinned.validate(&cfg.sinr()).is_ok() {
                cfg.sigma = Some(pinned.sigma);
                cfg.p_hat = Some(pinned.p_hat);
                cfg.mu = Some(pinned.mu);
            } else {
                cfg.sigma = None;
                cfg.p_hat = None;
                cfg.mu = None;
            }
        }
    }
    Ok(cfg)
}

/// One row per value, every row over the same seed list.
pub fn sweep(base: &ExperimentConfig, axis: Axis, values: &[String]) -> Result<Vec<RunMetrics>, HarnessError> {
    values.iter().map(|v| run_experiment(&sweep_point(base, axis, v)?)).collect()
}
