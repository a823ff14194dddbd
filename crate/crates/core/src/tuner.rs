//! Grid search over the reward-weight simplex with backtested metrics and a
//! risk-return Pareto frontier.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{self, BaselineActor, BaselineKind, Policy, PpoConfig, ValueHead};
use crate::env::{run_episode, Actor, EnvConfig, EnvData, EnvState, EpisodeSummary, EpisodeWindow, RewardMode, TradingEnv};
use crate::metrics::{self, MetricError, MetricFlag};
use crate::reward::{composite_reward, RewardWeights};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("grid step {0} does not divide 1")]
    BadStep(f64),
    #[error("no records to rank")]
    Empty,
    #[error("unknown metric key `{0}`")]
    UnknownKey(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// All 4-vectors of nonnegative multiples of `1 / divisions` summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexGrid {
    pub step: f64,
    pub divisions: u32,
    pub points: Vec<RewardWeights>,
}

impl SimplexGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Integer compositions of `total` into `parts` nonnegative parts, lexicographic.
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn go(left: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            go(left - k, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        go(total, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

fn divisions_for(step: f64) -> Option<u32> {
    if !(step > 0.0 && step <= 1.0) {
        return None;
    }
    let n = (1.0 / step).round();
    ((n * step - 1.0).abs() < 1e-9 && n >= 1.0 && n <= 10_000.0).then_some(n as u32)
}

pub fn simplex_grid(step: f64) -> Result<SimplexGrid, TuneError> {
    let n = divisions_for(step).ok_or(TuneError::BadStep(step))?;
    let d = n as f64;
    let points = compositions(n, 4)
        .into_iter()
        .map(|c| RewardWeights {
            w1: c[0] as f64 / d,
            w2: c[1] as f64 / d,
            w3: c[2] as f64 / d,
            w4: c[3] as f64 / d,
        })
        .collect();
    Ok(SimplexGrid {
        step,
        divisions: n,
        points,
    })
}

/// Fixed policy used to backtest a weight configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineChoice {
    /// Fully invested static allocation chosen to maximize the composite reward.
    #[default]
    Allocator,
    BuyAndHold,
    Flat,
    Random,
}

impl std::str::FromStr for BaselineChoice {
    type Err = TuneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "allocator" => Ok(BaselineChoice::Allocator),
            "buy_and_hold" => Ok(BaselineChoice::BuyAndHold),
            "flat" => Ok(BaselineChoice::Flat),
            "random" => Ok(BaselineChoice::Random),
            other => Err(TuneError::UnknownKey(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySource {
    Baseline(BaselineChoice),
    Trained(PpoConfig),
}

impl Default for PolicySource {
    fn default() -> Self {
        PolicySource::Baseline(BaselineChoice::Allocator)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRecord {
    pub weights: RewardWeights,
    pub ann_return: f64,
    pub max_dd: f64,
    pub sharpe: f64,
    pub sortino: f64,
    pub beta: f64,
    pub win_rate: f64,
    pub composite_r: f64,
    /// `metric:reason` markers for sentinel values.
    pub flags: Vec<String>,
    pub seed: u64,
    pub window: EpisodeWindow,
    /// Terminal value share held in each asset.
    pub terminal_exposure: Vec<f64>,
    /// Target allocation when the allocator baseline was used.
    pub allocation: Option<Vec<f64>>,
}

fn flag_name(f: MetricFlag) -> &'static str {
    match f {
        MetricFlag::PositiveInfinite => "positive_infinite",
        MetricFlag::NegativeInfinite => "negative_infinite",
        MetricFlag::Degenerate => "degenerate",
    }
}

fn metric_or_flag(
    name: &str,
    r: Result<f64, MetricError>,
    flags: &mut Vec<String>,
) -> f64 {
    match r {
        Ok(v) => v,
        Err(MetricError::ZeroVolatility) => {
            flags.push(format!("{name}:degenerate"));
            0.0
        }
        Err(MetricError::ZeroMarketVariance) => {
            flags.push(format!("{name}:zero_market_variance"));
            0.0
        }
        Err(e) => {
            flags.push(format!("{name}:{e}"));
            f64::NAN
        }
    }
}

/// Shares bought at the episode start for a fully invested allocation `fractions`.
fn allocation_shares(fractions: &[f64], prices: &[f64], initial: f64, rate: f64, h_max: u64) -> Vec<u64> {
    fractions
        .iter()
        .zip(prices)
        .map(|(f, p)| ((f * initial / (p * (1.0 + rate))).floor() as u64).min(h_max))
        .collect()
}

fn allocation_grid_divisions(stock_dim: usize) -> u32 {
    // finest of 10, 5, 4, 2 divisions keeping the candidate count manageable
    for n in [10u32, 5, 4, 2] {
        if compositions(n, stock_dim).len() <= 500 {
            return n;
        }
    }
    1
}

/// Picks the static allocation whose buy-and-hold return stream maximizes the
/// composite reward under the environment's weights.
pub fn best_allocation(env: &TradingEnv) -> Vec<f64> {
    let data = env.data();
    let cfg = env.config();
    let window = env.window();
    let n = env.stock_dim();
    let div = allocation_grid_divisions(n);
    let p0: Vec<f64> = (0..n).map(|a| data.panel.close(a, window.start)).collect();
    let bench = &data.panel.benchmark_returns.values()[window.start..window.end];
    let market = &data.panel.market_returns.values()[window.start..window.end];
    let mut best: Option<(f64, Vec<f64>)> = None;
    for c in compositions(div, n) {
        let fractions: Vec<f64> = c.iter().map(|&k| k as f64 / div as f64).collect();
        let shares = allocation_shares(&fractions, &p0, cfg.initial_amount, cfg.transaction_cost_rate, env.h_max());
        let spent: f64 = shares
            .iter()
            .zip(&p0)
            .map(|(&s, p)| s as f64 * p * (1.0 + cfg.transaction_cost_rate))
            .sum();
        let cash = cfg.initial_amount - spent;
        let mut prev = cfg.initial_amount;
        let mut returns = Vec::with_capacity(window.steps());
        for t in window.start + 1..=window.end {
            let v = cash
                + shares
                    .iter()
                    .enumerate()
                    .map(|(a, &s)| s as f64 * data.panel.close(a, t))
                    .sum::<f64>();
            returns.push(v / prev - 1.0);
            prev = v;
        }
        let Ok(b) = composite_reward(&returns, bench, market, &cfg.weights, &cfg.metrics) else {
            continue;
        };
        if best.as_ref().is_none_or(|(r, _)| b.total > *r) {
            best = Some((b.total, fractions));
        }
    }
    best.map(|(_, f)| f).unwrap_or_else(|| vec![0.0; n])
}

/// Buys a target allocation at the first step, then holds.
pub struct AllocationActor {
    pub actions: Vec<f64>,
}

impl AllocationActor {
    pub fn new(env: &TradingEnv, fractions: &[f64]) -> Self {
        let cfg = env.config();
        let p0: Vec<f64> = env.state().prices.clone();
        let h = env.h_max();
        let shares = allocation_shares(fractions, &p0, cfg.initial_amount, cfg.transaction_cost_rate, h);
        let actions = shares
            .iter()
            .map(|&s| if h == 0 { 0.0 } else { s as f64 / h as f64 })
            .collect();
        Self { actions }
    }
}

impl Actor for AllocationActor {
    fn act(&mut self, state: &EnvState) -> Vec<f64> {
        if state.t == 0 {
            self.actions.clone()
        } else {
            vec![0.0; self.actions.len()]
        }
    }
}

/// Metric suite for a finished episode.
pub fn episode_record(
    weights: RewardWeights,
    env: &TradingEnv,
    ep: &EpisodeSummary,
    seed: u64,
    allocation: Option<Vec<f64>>,
) -> TuneRecord {
    let ctx = &env.config().metrics;
    let mut flags = Vec::new();
    let r = &ep.returns;
    let ann_return = metric_or_flag("ann_return", metrics::annualized_return(r, ctx, ctx.annualization), &mut flags);
    let max_dd = metric_or_flag("max_dd", metrics::max_drawdown(&ep.equity), &mut flags);
    let sharpe = metric_or_flag("sharpe", metrics::sharpe(r, ctx), &mut flags);
    let sortino = match metrics::sortino(r, ctx) {
        Ok(f) => {
            if let Some(flag) = f.flag {
                flags.push(format!("sortino:{}", flag_name(flag)));
            }
            f.value
        }
        Err(e) => metric_or_flag("sortino", Err(e), &mut flags),
    };
    let beta = metric_or_flag("beta", metrics::beta(r, &ep.market, ctx).map(|b| b.raw), &mut flags);
    let win_rate = if ep.trade_pnls.is_empty() {
        flags.push("win_rate:no_trades".into());
        0.0
    } else {
        metric_or_flag("win_rate", metrics::win_rate(&ep.trade_pnls), &mut flags)
    };
    let state = &ep.final_state;
    let terminal_exposure = state
        .holdings
        .iter()
        .zip(&state.prices)
        .map(|(&h, p)| h as f64 * p / state.portfolio_value)
        .collect();
    TuneRecord {
        weights,
        ann_return,
        max_dd,
        sharpe,
        sortino,
        beta,
        win_rate,
        composite_r: ep.objective,
        flags,
        seed,
        window: env.window(),
        terminal_exposure,
        allocation,
    }
}

fn failed_record(weights: RewardWeights, window: EpisodeWindow, seed: u64, stock_dim: usize, err: String) -> TuneRecord {
    TuneRecord {
        weights,
        ann_return: f64::NAN,
        max_dd: f64::NAN,
        sharpe: f64::NAN,
        sortino: f64::NAN,
        beta: f64::NAN,
        win_rate: f64::NAN,
        composite_r: f64::NAN,
        flags: vec![format!("error:{err}")],
        seed,
        window,
        terminal_exposure: vec![f64::NAN; stock_dim],
        allocation: None,
    }
}

/// Backtests one weight configuration. Failures come back as a flagged record.
pub fn evaluate_config(
    weights: RewardWeights,
    data: &Arc<EnvData>,
    env_config: &EnvConfig,
    window: EpisodeWindow,
    source: &PolicySource,
    seed: u64,
) -> TuneRecord {
    let n = data.stock_dim();
    let fail = |e: String| failed_record(weights, window, seed, n, e);
    let weights = match weights.normalized() {
        Ok(w) => w,
        Err(e) => return fail(e.to_string()),
    };
    let mut cfg = env_config.clone();
    cfg.weights = weights;
    // the episode objective is identical under both modes; terminal avoids per-step recomputation
    if matches!(source, PolicySource::Baseline(_)) {
        cfg.reward_mode = RewardMode::Terminal;
    }
    let mut env = match TradingEnv::new(data.clone(), cfg, window) {
        Ok(e) => e,
        Err(e) => return fail(e.to_string()),
    };
    let mut allocation = None;
    let episode = match source {
        PolicySource::Baseline(choice) => {
            let mut actor: Box<dyn Actor> = match choice {
                BaselineChoice::Allocator => {
                    let fractions = best_allocation(&env);
                    let actor = AllocationActor::new(&env, &fractions);
                    allocation = Some(fractions);
                    Box::new(actor)
                }
                BaselineChoice::BuyAndHold => Box::new(agent::baseline_policy(BaselineKind::BuyAndHold, n, seed)),
                BaselineChoice::Flat => Box::new(agent::baseline_policy(BaselineKind::Flat, n, seed)),
                BaselineChoice::Random => Box::new(BaselineActor::Random {
                    stock_dim: n,
                    rng: ChaCha8Rng::seed_from_u64(seed),
                }),
            };
            run_episode(&mut env, actor.as_mut()).map_err(|e| e.to_string())
        }
        PolicySource::Trained(ppo) => {
            let ppo = PpoConfig { seed, ..ppo.clone() };
            let d = env.state_dimension();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let policy = Policy::new(d, n, ppo.init_log_std, &mut rng);
            agent::train(&env, policy, ValueHead::new(d), &ppo)
                .and_then(|t| agent::evaluate_policy(&mut env, &t.policy, &t.scaler))
                .map_err(|e| e.to_string())
        }
    };
    match episode {
        Ok(ep) => episode_record(weights, &env, &ep, seed, allocation),
        Err(e) => fail(e),
    }
}

/// Evaluates every configuration in parallel; output order follows `points`.
pub fn sweep(
    points: &[RewardWeights],
    data: &Arc<EnvData>,
    env_config: &EnvConfig,
    window: EpisodeWindow,
    source: &PolicySource,
    seed: u64,
) -> Vec<TuneRecord> {
    points
        .par_iter()
        .map(|w| evaluate_config(*w, data, env_config, window, source, seed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKey {
    AnnReturn,
    MaxDd,
    Sharpe,
    Sortino,
    Beta,
    WinRate,
    CompositeR,
}

impl MetricKey {
    pub fn get(self, r: &TuneRecord) -> f64 {
        match self {
            MetricKey::AnnReturn => r.ann_return,
            MetricKey::MaxDd => r.max_dd,
            MetricKey::Sharpe => r.sharpe,
            MetricKey::Sortino => r.sortino,
            MetricKey::Beta => r.beta,
            MetricKey::WinRate => r.win_rate,
            MetricKey::CompositeR => r.composite_r,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKey::AnnReturn => "ann_return",
            MetricKey::MaxDd => "max_dd",
            MetricKey::Sharpe => "sharpe",
            MetricKey::Sortino => "sortino",
            MetricKey::Beta => "beta",
            MetricKey::WinRate => "win_rate",
            MetricKey::CompositeR => "composite_R",
        }
    }
}

impl std::str::FromStr for MetricKey {
    type Err = TuneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            MetricKey::AnnReturn,
            MetricKey::MaxDd,
            MetricKey::Sharpe,
            MetricKey::Sortino,
            MetricKey::Beta,
            MetricKey::WinRate,
            MetricKey::CompositeR,
        ]
        .into_iter()
        .find(|k| k.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| TuneError::UnknownKey(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub return_key: MetricKey,
    pub risk_key: MetricKey,
    /// Non-dominated record indices, by return descending then risk ascending.
    pub members: Vec<usize>,
    /// Per input record.
    pub dominated: Vec<bool>,
}

/// Non-dominated points when maximizing `.0` and minimizing `.1`. Points with a
/// NaN coordinate are never on the frontier; exact ties are all kept.
pub fn pareto_indices(points: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len())
        .filter(|&i| !points[i].0.is_nan() && !points[i].1.is_nan())
        .collect();
    order.sort_by(|&a, &b| {
        points[b]
            .0
            .total_cmp(&points[a].0)
            .then(points[a].1.total_cmp(&points[b].1))
    });
    let mut members = Vec::new();
    let mut best_higher = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let ret = points[order[i]].0;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == ret {
            j += 1;
        }
        let group_min = points[order[i]].1;
        for &k in &order[i..j] {
            let risk = points[k].1;
            if risk < best_higher && risk <= group_min {
                members.push(k);
            }
        }
        best_higher = best_higher.min(group_min);
        i = j;
    }
    members
}

pub fn pareto_frontier(records: &[TuneRecord], return_key: MetricKey, risk_key: MetricKey) -> Result<Frontier, TuneError> {
    if records.is_empty() {
        return Err(TuneError::Empty);
    }
    let points: Vec<(f64, f64)> = records.iter().map(|r| (return_key.get(r), risk_key.get(r))).collect();
    let members = pareto_indices(&points);
    let mut dominated = vec![true; records.len()];
    for &m in &members {
        dominated[m] = false;
    }
    Ok(Frontier {
        return_key,
        risk_key,
        members,
        dominated,
    })
}

pub const SWEEP_HEADER: [&str; 12] = [
    "w1", "w2", "w3", "w4", "ann_return", "max_dd", "sharpe", "sortino", "beta", "win_rate", "composite_R", "flags",
];

pub fn write_sweep_csv<W: Write>(records: &[TuneRecord], sink: W) -> Result<(), TuneError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SWEEP_HEADER)?;
    for r in records {
        let mut row: Vec<String> = r.weights.as_array().iter().map(|x| x.to_string()).collect();
        for v in [r.ann_return, r.max_dd, r.sharpe, r.sortino, r.beta, r.win_rate, r.composite_r] {
            row.push(v.to_string());
        }
        row.push(r.flags.join(";"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seed: u64,
    pub step: f64,
    pub configurations: usize,
    pub window: EpisodeWindow,
    pub return_key: MetricKey,
    pub risk_key: MetricKey,
    pub frontier: Vec<usize>,
    /// Index of the record with the highest composite reward.
    pub best_composite: Option<usize>,
    pub flagged: usize,
}

impl SweepSummary {
    pub fn new(records: &[TuneRecord], frontier: &Frontier, step: f64, seed: u64, window: EpisodeWindow) -> Self {
        let best_composite = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.composite_r.is_finite())
            .max_by(|a, b| a.1.composite_r.total_cmp(&b.1.composite_r).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i);
        Self {
            seed,
            step,
            configurations: records.len(),
            window,
            return_key: frontier.return_key,
            risk_key: frontier.risk_key,
            frontier: frontier.members.clone(),
            best_composite,
            flagged: records.iter().filter(|r| !r.flags.is_empty()).count(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indicators::IndicatorConfig;
    use crate::marketdata::{align, PriceSeries};
    use chrono::NaiveDate;
    use proptest::prelude::*;

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
        Arc::new(EnvData::new(align(&assets, &idx, &idx).unwrap(), &small_indicators()).unwrap())
    }

    fn binom(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn grid_counts_and_sums() {
        for (step, count) in [(1.0, 4), (0.5, 10), (0.1, 286), (0.25, 35)] {
            let g = simplex_grid(step).unwrap();
            assert_eq!(g.len(), count);
            assert_eq!(g.len() as u64, binom(g.divisions as u64 + 3, 3));
            for p in &g.points {
                assert!((p.sum() - 1.0).abs() <= 1e-12);
                assert!(p.as_array().iter().all(|&x| x >= 0.0));
            }
        }
        let corners = simplex_grid(1.0).unwrap().points;
        assert_eq!(corners[0].as_array(), [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(corners[3].as_array(), [1.0, 0.0, 0.0, 0.0]);
        for bad in [0.3, 0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(simplex_grid(bad), Err(TuneError::BadStep(_))));
        }
    }

    #[test]
    fn frontier_examples() {
        assert_eq!(pareto_indices(&[(0.1, 0.2)]), vec![0]);
        assert_eq!(pareto_indices(&[(0.2, 0.1), (0.1, 0.2)]), vec![0]);
        assert_eq!(pareto_indices(&[(0.1, 0.1), (0.1, 0.1)]), vec![0, 1]);
        assert_eq!(pareto_indices(&[(0.1, 0.1), (0.1, 0.2)]), vec![0]);
        assert_eq!(pareto_indices(&[(f64::NAN, 0.0), (0.0, 0.0)]), vec![1]);
        assert!(matches!(
            pareto_frontier(&[], MetricKey::AnnReturn, MetricKey::MaxDd),
            Err(TuneError::Empty)
        ));
    }

    fn brute_force(points: &[(f64, f64)]) -> Vec<usize> {
        let dominates = |a: (f64, f64), b: (f64, f64)| a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1);
        let mut out: Vec<usize> = (0..points.len())
            .filter(|&i| !(0..points.len()).any(|j| dominates(points[j], points[i])))
            .collect();
        out.sort();
        out
    }

    proptest! {
        #[test]
        fn frontier_matches_brute_force(raw in proptest::collection::vec((0u8..6, 0u8..6), 1..50)) {
            let points: Vec<(f64, f64)> = raw.iter().map(|&(a, b)| (a as f64 * 0.1, b as f64 * 0.1)).collect();
            let mut fast = pareto_indices(&points);
            fast.sort();
            prop_assert_eq!(fast, brute_force(&points));
        }
    }

    #[test]
    fn flat_prices_buy_and_hold_is_inert() {
        let d = data(&[vec![40.0; 40]], &vec![100.0; 40]);
        let cfg = EnvConfig {
            transaction_cost_rate: 0.0,
            ..EnvConfig::default()
        };
        let window = d.full_window(&cfg);
        let src = PolicySource::Baseline(BaselineChoice::BuyAndHold);
        let w = RewardWeights::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let r = evaluate_config(w, &d, &cfg, window, &src, 3);
        assert_eq!(r.composite_r, 0.0);
        assert_eq!(r.max_dd, 0.0);
        assert!(r.terminal_exposure[0] > 0.9);
        let again = evaluate_config(w, &d, &cfg, window, &src, 3);
        assert_eq!(format!("{r:?}"), format!("{again:?}"));
    }

    #[test]
    fn errors_become_flagged_records() {
        let d = data(&[vec![40.0; 40]], &vec![100.0; 40]);
        let cfg = EnvConfig::default();
        let window = EpisodeWindow { start: 30, end: 500 };
        let r = evaluate_config(RewardWeights::equal(), &d, &cfg, window, &PolicySource::default(), 0);
        assert!(r.composite_r.is_nan());
        assert!(r.flags[0].starts_with("error:"));
    }

    #[test]
    fn sweep_matches_serial() {
        let up: Vec<f64> = (0..60).map(|i| 30.0 * (1.0 + 0.01 * i as f64 + 0.02 * ((i * 7 % 5) as f64 - 2.0))).collect();
        let other: Vec<f64> = (0..60).map(|i| 50.0 + ((i * 3 % 7) as f64 - 3.0)).collect();
        let d = data(&[up.clone(), other], &up);
        let cfg = EnvConfig::default();
        let window = d.full_window(&cfg);
        let points: Vec<RewardWeights> = simplex_grid(0.5).unwrap().points;
        let src = PolicySource::default();
        let par = sweep(&points, &d, &cfg, window, &src, 5);
        assert_eq!(par.len(), 10);
        for (p, w) in par.iter().zip(&points) {
            let single = evaluate_config(*w, &d, &cfg, window, &src, 5);
            assert_eq!(format!("{p:?}"), format!("{single:?}"));
        }
        let mut buf = Vec::new();
        write_sweep_csv(&par, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("w1,w2,w3,w4,ann_return,max_dd,sharpe,sortino,beta,win_rate,composite_R,flags"));
    }
}
