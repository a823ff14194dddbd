//! Deterministic daily multi-asset trading environment.
//!
//! Actions in `[-1, 1]` per asset are scaled by a share cap `h_max`, trades
//! execute at the current close with proportional costs, and the composite
//! reward is emitted either once at the end of the episode or as per-step
//! increments that telescope to the same total.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indicators::{extended_indicators, IndicatorConfig, IndicatorError, IndicatorKind, IndicatorSet};
use crate::marketdata::AlignedPanel;
use crate::metrics::MetricContext;
use crate::reward::{composite_reward, RewardError, RewardWeights};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("episode window {start}..={end} invalid: {reason}")]
    Window { start: usize, end: usize, reason: String },
    #[error("action has {got} components, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("action component {0} is NaN")]
    NanAction(usize),
    #[error("episode already finished")]
    Done,
    #[error("max price must be positive, got {0}")]
    NonPositivePrice(f64),
    #[error(transparent)]
    Indicator(#[from] IndicatorError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// How the composite reward is spread over an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Zero every step, full-horizon reward on the last step.
    Terminal,
    /// Increment of the reward over the realized prefix at each step.
    #[default]
    Potential,
}

impl std::str::FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "terminal" => Ok(RewardMode::Terminal),
            "potential" => Ok(RewardMode::Potential),
            other => Err(format!("unknown reward mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub initial_amount: f64,
    pub transaction_cost_rate: f64,
    /// Indicator features per asset, in observation order.
    pub indicators: Vec<IndicatorKind>,
    pub weights: RewardWeights,
    pub reward_mode: RewardMode,
    /// Minimum first date index of an episode; the indicator warm-up applies regardless.
    pub warm_up: usize,
    pub metrics: MetricContext,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            initial_amount: 1e6,
            transaction_cost_rate: 0.001,
            indicators: IndicatorKind::ALL.to_vec(),
            weights: RewardWeights::default(),
            reward_mode: RewardMode::Potential,
            warm_up: 0,
            metrics: MetricContext::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.initial_amount > 0.0 && self.initial_amount.is_finite()) {
            return Err(EnvError::Config("initial_amount must be > 0".into()));
        }
        if !(0.0..=0.1).contains(&self.transaction_cost_rate) {
            return Err(EnvError::Config("transaction_cost_rate must lie in [0, 0.1]".into()));
        }
        self.metrics
            .validate()
            .map_err(|e| EnvError::Config(e.to_string()))
    }
}

/// `floor(initial_amount / max_price)`.
pub fn h_max(initial_amount: f64, max_price: f64) -> Result<u64, EnvError> {
    if !(max_price > 0.0) {
        return Err(EnvError::NonPositivePrice(max_price));
    }
    Ok((initial_amount / max_price).floor() as u64)
}

/// Observation length: portfolio value, prices, holdings, then indicators.
pub fn state_dimension(stock_dim: usize, indicator_count: usize) -> usize {
    1 + 2 * stock_dim + indicator_count * stock_dim
}

/// Price panel plus precomputed indicators, shared by environment instances.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvData {
    pub panel: AlignedPanel,
    pub indicators: IndicatorSet,
}

impl EnvData {
    pub fn new(panel: AlignedPanel, config: &IndicatorConfig) -> Result<Self, EnvError> {
        let indicators = extended_indicators(&panel, config)?;
        Ok(Self { panel, indicators })
    }

    pub fn stock_dim(&self) -> usize {
        self.panel.stock_dim()
    }

    /// First date index usable as an episode start under `config`.
    pub fn first_start(&self, config: &EnvConfig) -> usize {
        self.indicators.warm_up(&config.indicators).max(config.warm_up)
    }

    /// The longest window permitted by `config`.
    pub fn full_window(&self, config: &EnvConfig) -> EpisodeWindow {
        EpisodeWindow {
            start: self.first_start(config),
            end: self.panel.len() - 1,
        }
    }
}

/// Inclusive range of price-date indices; an episode takes `end - start` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeWindow {
    pub start: usize,
    pub end: usize,
}

impl EpisodeWindow {
    pub fn steps(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Step index within the episode.
    pub t: usize,
    pub portfolio_value: f64,
    pub cash: f64,
    pub holdings: Vec<u64>,
    pub prices: Vec<f64>,
    /// Indicator values grouped by indicator, then asset.
    pub indicators: Vec<f64>,
}

impl EnvState {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + self.prices.len() * 2 + self.indicators.len());
        out.push(self.portfolio_value);
        out.extend_from_slice(&self.prices);
        out.extend(self.holdings.iter().map(|&h| h as f64));
        out.extend_from_slice(&self.indicators);
        out
    }

    pub fn holdings_value(&self) -> f64 {
        self.holdings
            .iter()
            .zip(&self.prices)
            .map(|(&h, p)| h as f64 * p)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Signed executed shares per asset (sells negative).
    pub fills: Vec<i64>,
    /// Execution price per asset.
    pub prices: Vec<f64>,
    pub fees: f64,
    pub notional: f64,
    /// Cash plus holdings at execution prices, after trades and before prices move.
    pub value_post_trade: f64,
    pub value_before: f64,
    pub value_after: f64,
    pub portfolio_return: f64,
    pub benchmark_return: f64,
    pub market_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogRow {
    t: usize,
    action: Vec<f64>,
    fills: Vec<i64>,
    fees: f64,
    cash: f64,
    value: f64,
    portfolio_return: f64,
    reward: f64,
}

/// Composite reward over a prefix; fewer than two periods score 0.
fn prefix_objective(
    returns: &[f64],
    benchmark: &[f64],
    market: &[f64],
    weights: &RewardWeights,
    ctx: &MetricContext,
) -> Result<f64, RewardError> {
    if returns.len() < 2 {
        return Ok(0.0);
    }
    Ok(composite_reward(returns, benchmark, market, weights, ctx)?.total)
}

/// Per-step rewards for a realized return stream under `mode`.
pub fn episode_reward_stream(
    returns: &[f64],
    benchmark: &[f64],
    market: &[f64],
    weights: &RewardWeights,
    ctx: &MetricContext,
    mode: RewardMode,
) -> Result<Vec<f64>, RewardError> {
    let n = returns.len();
    let mut out = Vec::with_capacity(n);
    match mode {
        RewardMode::Terminal => {
            out.resize(n.saturating_sub(1), 0.0);
            if n > 0 {
                out.push(prefix_objective(returns, benchmark, market, weights, ctx)?);
            }
        }
        RewardMode::Potential => {
            let mut prev = 0.0;
            for t in 1..=n {
                let cur = prefix_objective(&returns[..t], &benchmark[..t], &market[..t], weights, ctx)?;
                out.push(cur - prev);
                prev = cur;
            }
        }
    }
    Ok(out)
}

/// One environment instance. Single-threaded; run independent instances in parallel.
#[derive(Debug, Clone)]
pub struct TradingEnv {
    data: Arc<EnvData>,
    config: EnvConfig,
    window: EpisodeWindow,
    h_max: u64,
    state: EnvState,
    returns: Vec<f64>,
    benchmark: Vec<f64>,
    market: Vec<f64>,
    equity: Vec<f64>,
    rewards: Vec<f64>,
    prev_objective: f64,
    total_fees: f64,
    total_notional: f64,
    cost_basis: Vec<f64>,
    trade_pnls: Vec<f64>,
    log: Vec<LogRow>,
}

impl TradingEnv {
    pub fn new(data: Arc<EnvData>, config: EnvConfig, window: EpisodeWindow) -> Result<Self, EnvError> {
        config.validate()?;
        let len = data.panel.len();
        let bad = |reason: String| EnvError::Window {
            start: window.start,
            end: window.end,
            reason,
        };
        if window.end >= len {
            return Err(bad(format!("end beyond panel of {len} dates")));
        }
        if window.start >= window.end {
            return Err(bad("window needs at least one step".into()));
        }
        let first = data.first_start(&config);
        if window.start < first {
            return Err(bad(format!("starts inside warm-up, first valid start is {first}")));
        }
        // cap from the highest close any asset reaches inside the window
        let max_price = (0..data.stock_dim())
            .flat_map(|a| (window.start..=window.end).map(move |t| (a, t)))
            .map(|(a, t)| data.panel.close(a, t))
            .fold(f64::NEG_INFINITY, f64::max);
        let h_max = h_max(config.initial_amount, max_price)?;

        let state = Self::initial_state(&data, &config, window);
        let n = data.stock_dim();
        let mut env = Self {
            data,
            config,
            window,
            h_max,
            state,
            returns: Vec::new(),
            benchmark: Vec::new(),
            market: Vec::new(),
            equity: Vec::new(),
            rewards: Vec::new(),
            prev_objective: 0.0,
            total_fees: 0.0,
            total_notional: 0.0,
            cost_basis: vec![0.0; n],
            trade_pnls: Vec::new(),
            log: Vec::new(),
        };
        env.reset();
        Ok(env)
    }

    fn initial_state(data: &EnvData, config: &EnvConfig, window: EpisodeWindow) -> EnvState {
        let n = data.stock_dim();
        let mut state = EnvState {
            t: 0,
            portfolio_value: config.initial_amount,
            cash: config.initial_amount,
            holdings: vec![0; n],
            prices: vec![0.0; n],
            indicators: Vec::new(),
        };
        Self::observe(data, config, window.start, &mut state);
        state
    }

    fn observe(data: &EnvData, config: &EnvConfig, date: usize, state: &mut EnvState) {
        let n = data.stock_dim();
        for a in 0..n {
            state.prices[a] = data.panel.close(a, date);
        }
        state.indicators.clear();
        for &kind in &config.indicators {
            for a in 0..n {
                state.indicators.push(data.indicators.value(kind, a, date));
            }
        }
    }

    /// Restores the start-of-episode state and clears all episode records.
    pub fn reset(&mut self) -> EnvState {
        self.state = Self::initial_state(&self.data, &self.config, self.window);
        self.returns.clear();
        self.benchmark.clear();
        self.market.clear();
        self.equity.clear();
        self.equity.push(self.config.initial_amount);
        self.rewards.clear();
        self.prev_objective = 0.0;
        self.total_fees = 0.0;
        self.total_notional = 0.0;
        self.cost_basis.iter_mut().for_each(|c| *c = 0.0);
        self.trade_pnls.clear();
        self.log.clear();
        self.state.clone()
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn data(&self) -> &Arc<EnvData> {
        &self.data
    }

    pub fn window(&self) -> EpisodeWindow {
        self.window
    }

    pub fn h_max(&self) -> u64 {
        self.h_max
    }

    pub fn stock_dim(&self) -> usize {
        self.data.stock_dim()
    }

    pub fn state_dimension(&self) -> usize {
        state_dimension(self.stock_dim(), self.config.indicators.len())
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.window.steps()
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn benchmark_returns(&self) -> &[f64] {
        &self.benchmark
    }

    pub fn market_returns(&self) -> &[f64] {
        &self.market
    }

    /// Portfolio value after each step, starting with the initial amount.
    pub fn equity(&self) -> &[f64] {
        &self.equity
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn total_fees(&self) -> f64 {
        self.total_fees
    }

    pub fn total_notional(&self) -> f64 {
        self.total_notional
    }

    /// Realized pnl of every sell so far, net of fees against average cost.
    pub fn realized_trade_pnls(&self) -> &[f64] {
        &self.trade_pnls
    }

    /// Realized pnls plus open positions marked to the current price.
    pub fn closing_trade_pnls(&self) -> Vec<f64> {
        let mut out = self.trade_pnls.clone();
        for a in 0..self.stock_dim() {
            let h = self.state.holdings[a];
            if h > 0 {
                out.push(h as f64 * (self.state.prices[a] - self.cost_basis[a]));
            }
        }
        out
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        let n = self.stock_dim();
        if action.len() != n {
            return Err(EnvError::ActionLength {
                expected: n,
                got: action.len(),
            });
        }
        if let Some(i) = action.iter().position(|a| a.is_nan()) {
            return Err(EnvError::NanAction(i));
        }
        if self.is_done() {
            return Err(EnvError::Done);
        }

        let rate = self.config.transaction_cost_rate;
        let h_max = self.h_max as f64;
        let date = self.window.start + self.state.t;
        let prices = self.state.prices.clone();
        let value_before = self.state.portfolio_value;
        let clipped: Vec<f64> = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        let desired: Vec<i64> = clipped.iter().map(|a| (a * h_max).round() as i64).collect();

        let mut fills = vec![0i64; n];
        let mut fees = 0.0;
        let mut notional_total = 0.0;
        let cash = &mut self.state.cash;
        let holdings = &mut self.state.holdings;

        for a in 0..n {
            if desired[a] >= 0 {
                continue;
            }
            let shares = desired[a].unsigned_abs().min(holdings[a]);
            if shares == 0 {
                continue;
            }
            let notional = shares as f64 * prices[a];
            let fee = notional * rate;
            *cash = *cash + notional - fee;
            holdings[a] -= shares;
            fills[a] = -(shares as i64);
            fees += fee;
            notional_total += notional;
            self.trade_pnls
                .push(notional - fee - shares as f64 * self.cost_basis[a]);
            if holdings[a] == 0 {
                self.cost_basis[a] = 0.0;
            }
        }

        for a in 0..n {
            if desired[a] <= 0 {
                continue;
            }
            let unit = prices[a] * (1.0 + rate);
            let mut shares = (desired[a] as u64).min((*cash / unit).floor() as u64);
            while shares > 0 {
                let notional = shares as f64 * prices[a];
                if *cash - notional - notional * rate >= 0.0 {
                    break;
                }
                shares -= 1;
            }
            if shares == 0 {
                continue;
            }
            let notional = shares as f64 * prices[a];
            let fee = notional * rate;
            *cash = *cash - notional - fee;
            let held = holdings[a] as f64;
            self.cost_basis[a] =
                (self.cost_basis[a] * held + notional + fee) / (held + shares as f64);
            holdings[a] += shares;
            fills[a] = shares as i64;
            fees += fee;
            notional_total += notional;
        }
        self.total_fees += fees;
        self.total_notional += notional_total;
        let value_post_trade = self.state.cash + self.state.holdings_value();

        // prices advance to the next date
        Self::observe(&self.data, &self.config, date + 1, &mut self.state);
        self.state.t += 1;
        let value_after = self.state.cash + self.state.holdings_value();
        self.state.portfolio_value = value_after;

        let portfolio_return = (value_after - value_before) / value_before;
        let benchmark_return = self.data.panel.benchmark_returns.values()[date];
        let market_return = self.data.panel.market_returns.values()[date];
        self.returns.push(portfolio_return);
        self.benchmark.push(benchmark_return);
        self.market.push(market_return);
        self.equity.push(value_after);

        let done = self.is_done();
        let reward = self.step_reward(done)?;
        self.rewards.push(reward);

        self.log.push(LogRow {
            t: self.state.t - 1,
            action: clipped,
            fills: fills.clone(),
            fees,
            cash: self.state.cash,
            value: value_after,
            portfolio_return,
            reward,
        });

        Ok(StepOutcome {
            state: self.state.clone(),
            reward,
            done,
            info: StepInfo {
                fills,
                prices,
                fees,
                notional: notional_total,
                value_post_trade,
                value_before,
                value_after,
                portfolio_return,
                benchmark_return,
                market_return,
            },
        })
    }

    fn step_reward(&mut self, done: bool) -> Result<f64, EnvError> {
        let w = &self.config.weights;
        let ctx = &self.config.metrics;
        match self.config.reward_mode {
            RewardMode::Terminal => {
                if done {
                    Ok(prefix_objective(&self.returns, &self.benchmark, &self.market, w, ctx)?)
                } else {
                    Ok(0.0)
                }
            }
            RewardMode::Potential => {
                let cur = prefix_objective(&self.returns, &self.benchmark, &self.market, w, ctx)?;
                let r = cur - self.prev_objective;
                self.prev_objective = cur;
                Ok(r)
            }
        }
    }

    /// Composite reward over everything realized so far (0 below two periods).
    pub fn episode_objective(&self) -> Result<f64, EnvError> {
        Ok(prefix_objective(
            &self.returns,
            &self.benchmark,
            &self.market,
            &self.config.weights,
            &self.config.metrics,
        )?)
    }

    /// Writes `t,action_<ticker>...,fill_<ticker>...,fees,cash,value,R_pt,reward`.
    pub fn write_episode_log<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let tickers = self.data.panel.tickers();
        let mut header = vec!["t".to_string()];
        header.extend(tickers.iter().map(|t| format!("action_{t}")));
        header.extend(tickers.iter().map(|t| format!("fill_{t}")));
        header.extend(["fees", "cash", "value", "R_pt", "reward"].map(String::from));
        w.write_record(&header).map_err(std::io::Error::other)?;
        for row in &self.log {
            let mut rec = vec![row.t.to_string()];
            rec.extend(row.action.iter().map(|a| a.to_string()));
            rec.extend(row.fills.iter().map(|f| f.to_string()));
            rec.extend(
                [row.fees, row.cash, row.value, row.portfolio_return, row.reward]
                    .iter()
                    .map(|v| v.to_string()),
            );
            w.write_record(&rec).map_err(std::io::Error::other)?;
        }
        w.flush()
    }
}

/// Anything that maps an observation to an action vector.
pub trait Actor {
    fn act(&mut self, state: &EnvState) -> Vec<f64>;
}

impl<F: FnMut(&EnvState) -> Vec<f64>> Actor for F {
    fn act(&mut self, state: &EnvState) -> Vec<f64> {
        self(state)
    }
}

/// Summary of one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub returns: Vec<f64>,
    pub benchmark: Vec<f64>,
    pub market: Vec<f64>,
    pub equity: Vec<f64>,
    pub rewards: Vec<f64>,
    pub total_fees: f64,
    pub trade_pnls: Vec<f64>,
    pub objective: f64,
    pub final_state: EnvState,
}

/// Resets `env` and runs it to completion under `actor`.
pub fn run_episode(env: &mut TradingEnv, actor: &mut dyn Actor) -> Result<EpisodeSummary, EnvError> {
    let mut state = env.reset();
    loop {
        let action = actor.act(&state);
        let out = env.step(&action)?;
        state = out.state;
        if out.done {
            break;
        }
    }
    Ok(EpisodeSummary {
        returns: env.returns().to_vec(),
        benchmark: env.benchmark_returns().to_vec(),
        market: env.market_returns().to_vec(),
        equity: env.equity().to_vec(),
        rewards: env.rewards().to_vec(),
        total_fees: env.total_fees(),
        trade_pnls: env.closing_trade_pnls(),
        objective: env.episode_objective()?,
        final_state: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marketdata::{align, PriceSeries};
    use chrono::NaiveDate;

    fn small_indicators() -> IndicatorConfig {
        IndicatorConfig {
            macd_fast: 3,
            macd_slow: 6,
            bollinger_window: 5,
            bollinger_k: 2.0,
            rsi_window: 4,
            cci_window: 4,
            dmi_window: 4,
            sma_short: 5,
            sma_long: 8,
            turbulence_lookback: 6,
        }
    }

    fn data(closes: &[Vec<f64>], index: &[f64]) -> Arc<EnvData> {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let assets: Vec<PriceSeries> = closes
            .iter()
            .enumerate()
            .map(|(i, c)| PriceSeries::from_closes(format!("A{i}"), start, c).unwrap())
            .collect();
        let idx = PriceSeries::from_closes("IDX", start, index).unwrap();
        let panel = align(&assets, &idx, &idx).unwrap();
        Arc::new(EnvData::new(panel, &small_indicators()).unwrap())
    }

    fn flat_data(len: usize, price: f64) -> Arc<EnvData> {
        let index: Vec<f64> = (0..len).map(|i| 100.0 + (i % 3) as f64).collect();
        data(&[vec![price; len]], &index)
    }

    #[test]
    fn h_max_examples() {
        assert_eq!(h_max(100_000.0, 250.0).unwrap(), 400);
        assert_eq!(h_max(100.0, 250.0).unwrap(), 0);
        assert_eq!(h_max(1000.0, 1000.0).unwrap(), 1);
        assert!(h_max(1000.0, 0.0).is_err());
    }

    #[test]
    fn state_dimension_examples() {
        assert_eq!(state_dimension(1, 0), 3);
        assert_eq!(state_dimension(5, 10), 61);
        assert_eq!(state_dimension(3, 9), 34);
    }

    #[test]
    fn reset_examples() {
        let d = flat_data(20, 10.0);
        let cfg = EnvConfig::default();
        let w = d.full_window(&cfg);
        assert_eq!(w.start, 7);
        let mut env = TradingEnv::new(d.clone(), cfg.clone(), w).unwrap();
        let s = env.reset();
        assert_eq!(s.portfolio_value, cfg.initial_amount);
        assert_eq!(s.flatten().len(), env.state_dimension());
        assert_eq!(env.reset(), s);

        let early = EpisodeWindow { start: 3, end: 19 };
        assert!(matches!(
            TradingEnv::new(d.clone(), cfg.clone(), early),
            Err(EnvError::Window { .. })
        ));
        let past = EpisodeWindow { start: 8, end: 20 };
        assert!(TradingEnv::new(d, cfg, past).is_err());
    }

    #[test]
    fn zero_action_on_flat_prices() {
        let d = flat_data(20, 10.0);
        let cfg = EnvConfig::default();
        let mut env = TradingEnv::new(d.clone(), cfg.clone(), d.full_window(&cfg)).unwrap();
        let out = env.step(&[0.0]).unwrap();
        assert_eq!(out.info.fees, 0.0);
        assert_eq!(out.info.fills, vec![0]);
        assert_eq!(out.info.portfolio_return, 0.0);
    }

    #[test]
    fn buy_fee_arithmetic() {
        let d = flat_data(20, 10.0);
        let cfg = EnvConfig {
            initial_amount: 10_000.0,
            ..EnvConfig::default()
        };
        let mut env = TradingEnv::new(d.clone(), cfg.clone(), d.full_window(&cfg)).unwrap();
        assert_eq!(env.h_max(), 1000);
        // 0.1 * 1000 = 100 shares at 10
        let out = env.step(&[0.1]).unwrap();
        assert_eq!(out.info.fills, vec![100]);
        assert_eq!(out.info.fees, 1.0);
        assert_eq!(out.state.cash, 10_000.0 - 1000.0 - 1.0);
    }

    #[test]
    fn sells_clip_to_holdings_and_buys_partially_fill() {
        let d = flat_data(20, 10.0);
        let cfg = EnvConfig {
            initial_amount: 10_000.0,
            ..EnvConfig::default()
        };
        let mut env = TradingEnv::new(d.clone(), cfg.clone(), d.full_window(&cfg)).unwrap();
        env.step(&[0.05]).unwrap();
        let out = env.step(&[-1.0]).unwrap();
        assert_eq!(out.info.fills, vec![-50]);
        assert_eq!(out.state.holdings, vec![0]);

        // full buy cannot afford h_max shares plus fees
        let out = env.step(&[1.0]).unwrap();
        let bought = out.info.fills[0] as f64;
        assert!(bought < 1000.0);
        assert!(out.state.cash >= 0.0);
        assert!(out.state.cash < 10.0 * 1.001);
    }

    #[test]
    fn buys_execute_in_index_order() {
        let len = 20;
        let d = data(&[vec![10.0; len], vec![10.0; len]], &(0..len).map(|i| 100.0 + i as f64).collect::<Vec<_>>());
        let cfg = EnvConfig {
            initial_amount: 1_000.0,
            transaction_cost_rate: 0.0,
            ..EnvConfig::default()
        };
        let mut env = TradingEnv::new(d.clone(), cfg.clone(), d.full_window(&cfg)).unwrap();
        let out = env.step(&[1.0, 1.0]).unwrap();
        assert_eq!(out.info.fills, vec![100, 0]);
    }

    #[test]
    fn rejects_bad_actions() {
        let d = flat_data(20, 10.0);
        let cfg = EnvConfig::default();
        let mut env = TradingEnv::new(d.clone(), cfg.clone(), d.full_window(&cfg)).unwrap();
        assert_eq!(env.step(&[f64::NAN]), Err(EnvError::NanAction(0)));
        assert!(matches!(env.step(&[0.0, 0.0]), Err(EnvError::ActionLength { .. })));
    }

    #[test]
    fn episode_ends_and_refuses_more_steps() {
        let d = flat_data(12, 10.0);
        let cfg = EnvConfig::default();
        let w = EpisodeWindow { start: 9, end: 11 };
        let mut env = TradingEnv::new(d, cfg, w).unwrap();
        assert!(!env.step(&[0.0]).unwrap().done);
        assert!(env.step(&[0.0]).unwrap().done);
        assert_eq!(env.step(&[0.0]), Err(EnvError::Done));
    }

    #[test]
    fn reward_modes_telescope() {
        let len = 40;
        let a: Vec<f64> = (0..len).map(|i| 50.0 + (i as f64 * 0.7).sin() * 3.0 + i as f64 * 0.1).collect();
        let idx: Vec<f64> = (0..len).map(|i| 100.0 + (i as f64 * 0.3).cos() * 2.0).collect();
        let d = data(&[a], &idx);
        for mode in [RewardMode::Terminal, RewardMode::Potential] {
            let cfg = EnvConfig {
                reward_mode: mode,
                ..EnvConfig::default()
            };
            let mut env = TradingEnv::new(d.clone(), cfg.clone(), d.full_window(&cfg)).unwrap();
            let mut k = 0;
            let summary = run_episode(&mut env, &mut |_: &EnvState| {
                k += 1;
                vec![if k % 3 == 0 { -0.5 } else { 0.2 }]
            })
            .unwrap();
            let total: f64 = summary.rewards.iter().sum();
            assert!((total - summary.objective).abs() < 1e-9);
            let stream = episode_reward_stream(
                &summary.returns,
                &summary.benchmark,
                &summary.market,
                &cfg.weights,
                &cfg.metrics,
                mode,
            )
            .unwrap();
            assert_eq!(stream, summary.rewards);
        }
    }

    #[test]
    fn one_step_episode_scores_zero() {
        let w = RewardWeights::equal();
        let ctx = MetricContext::default();
        for mode in [RewardMode::Terminal, RewardMode::Potential] {
            let s = episode_reward_stream(&[0.01], &[0.0], &[0.02], &w, &ctx, mode).unwrap();
            assert_eq!(s, vec![0.0]);
        }
    }

    #[test]
    fn episode_log_layout() {
        let d = flat_data(14, 10.0);
        let cfg = EnvConfig::default();
        let mut env = TradingEnv::new(d.clone(), cfg.clone(), d.full_window(&cfg)).unwrap();
        run_episode(&mut env, &mut |_: &EnvState| vec![0.3]).unwrap();
        let mut buf = Vec::new();
        env.write_episode_log(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,action_A0,fill_A0,fees,cash,value,R_pt,reward");
        assert_eq!(lines.count(), env.window().steps());
    }

    #[test]
    fn trade_pnls_include_open_positions() {
        let len = 20;
        let mut a = vec![10.0; len];
        for (i, p) in a.iter_mut().enumerate().skip(8) {
            *p = 10.0 + (i - 7) as f64;
        }
        let idx: Vec<f64> = (0..len).map(|i| 100.0 + (i % 2) as f64).collect();
        let d = data(&[a], &idx);
        let cfg = EnvConfig {
            transaction_cost_rate: 0.0,
            initial_amount: 1000.0,
            ..EnvConfig::default()
        };
        let mut env = TradingEnv::new(d.clone(), cfg.clone(), d.full_window(&cfg)).unwrap();
        let s = run_episode(&mut env, &mut |st: &EnvState| vec![if st.t == 0 { 1.0 } else { 0.0 }]).unwrap();
        assert_eq!(s.trade_pnls.len(), 1);
        assert!(s.trade_pnls[0] > 0.0);
    }
}
