//! Run configuration: TOML file, command-line overrides, validation and hashing.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use riskward::agent::PpoConfig;
use riskward::env::{EnvConfig, RewardMode};
use riskward::indicators::{IndicatorConfig, IndicatorKind};
use riskward::metrics::MetricContext;
use riskward::reward::RewardWeights;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const OUT_ENV: &str = "RISKWARD_OUT";
const DEFAULT_OUT: &str = "riskward-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// OHLCV files (plain or gzip); all tickers, benchmark and market may share files.
    pub paths: Vec<PathBuf>,
    /// Traded assets; empty means every ticker other than benchmark and market.
    pub tickers: Vec<String>,
    pub benchmark: String,
    /// Defaults to the benchmark.
    pub market: Option<String>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            paths: Vec::new(),
            tickers: Vec::new(),
            benchmark: "IDX".into(),
            market: None,
            from: None,
            to: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub initial_amount: f64,
    pub transaction_cost_rate: f64,
    pub indicators: Vec<IndicatorKind>,
    pub reward_mode: RewardMode,
    pub warm_up: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self {
            initial_amount: e.initial_amount,
            transaction_cost_rate: e.transaction_cost_rate,
            indicators: e.indicators,
            reward_mode: e.reward_mode,
            warm_up: e.warm_up,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerSection {
    pub step: f64,
    /// `allocator`, `buy_and_hold`, `flat`, `random` or `trained`.
    pub policy: String,
    pub return_key: String,
    pub risk_key: String,
}

impl Default for TunerSection {
    fn default() -> Self {
        Self {
            step: 0.1,
            policy: "allocator".into(),
            return_key: "ann_return".into(),
            risk_key: "max_dd".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    /// `buy_and_hold`, `flat`, `random`, `allocator` or `checkpoint`.
    pub policy: String,
    pub checkpoint: Option<PathBuf>,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            policy: "buy_and_hold".into(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckSection {
    pub instances: usize,
    pub periods: usize,
    pub h: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            instances: 100,
            periods: 50,
            h: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub weights: RewardWeights,
    pub data: DataSection,
    pub env: EnvSection,
    pub metrics: MetricContext,
    pub indicators: IndicatorConfig,
    pub tuner: TunerSection,
    pub agent: PpoConfig,
    pub backtest: BacktestSection,
    pub gradcheck: GradcheckSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            weights: RewardWeights::default(),
            data: DataSection::default(),
            env: EnvSection::default(),
            metrics: MetricContext::default(),
            indicators: IndicatorConfig::default(),
            tuner: TunerSection::default(),
            agent: PpoConfig::default(),
            backtest: BacktestSection::default(),
            gradcheck: GradcheckSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Vec<PathBuf>,
    pub tickers: Option<Vec<String>>,
    pub benchmark: Option<String>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub weights: Option<RewardWeights>,
    pub step: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<RewardMode>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // relative data paths are taken relative to the config file
        if let Some(dir) = path.parent() {
            for p in &mut cfg.data.paths {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            if let Some(c) = &mut cfg.backtest.checkpoint {
                if c.is_relative() {
                    *c = dir.join(&*c);
                }
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        if !o.data.is_empty() {
            self.data.paths = o.data;
        }
        if let Some(t) = o.tickers {
            self.data.tickers = t;
        }
        if let Some(b) = o.benchmark {
            self.data.benchmark = b;
        }
        if o.from.is_some() {
            self.data.from = o.from;
        }
        if o.to.is_some() {
            self.data.to = o.to;
        }
        if let Some(w) = o.weights {
            self.weights = w;
        }
        if let Some(s) = o.step {
            self.tuner.step = s;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.mode {
            self.env.reward_mode = m;
        }
        if o.out.is_some() {
            self.out = o.out;
        }
    }

    /// Checks shared by every command; `needs_data` adds the data-file checks.
    pub fn validate(&self, needs_data: bool) -> Result<(), CliError> {
        self.env_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.indicators
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.agent
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let w = self.weights.as_array();
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(self.weights.sum() > 0.0) {
            return Err(CliError::Config(format!("invalid weights {w:?}")));
        }
        if let (Some(from), Some(to)) = (self.data.from, self.data.to) {
            if from > to {
                return Err(CliError::Config(format!("empty date range {from}..{to}")));
            }
        }
        if needs_data {
            if self.data.paths.is_empty() {
                return Err(CliError::Config("no data files given (--data or [data].paths)".into()));
            }
            for p in &self.data.paths {
                if !p.exists() {
                    return Err(CliError::Data(format!("data file not found: {}", p.display())));
                }
            }
        }
        Ok(())
    }

    pub fn market(&self) -> &str {
        self.data.market.as_deref().unwrap_or(&self.data.benchmark)
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            initial_amount: self.env.initial_amount,
            transaction_cost_rate: self.env.transaction_cost_rate,
            indicators: self.env.indicators.clone(),
            weights: self.weights,
            reward_mode: self.env.reward_mode,
            warm_up: self.env.warm_up,
            metrics: self.metrics.clone(),
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// SHA-256 over the effective configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }
}
