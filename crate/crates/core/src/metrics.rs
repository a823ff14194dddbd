//! Reward components and backtest performance metrics.
//!
//! Variance-like quantities use population (1/T) normalization throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty series")]
    Empty,
    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("return {value} at index {index} is not greater than -1")]
    ReturnBelowMinusOne { index: usize, value: f64 },
    #[error("market variance is zero")]
    ZeroMarketVariance,
    #[error("zero volatility")]
    ZeroVolatility,
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("equity value {value} at index {index} is not positive")]
    NonPositiveEquity { index: usize, value: f64 },
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid metric context: {0}")]
    Context(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnualizationMode {
    /// `(prod(1 + R_t))^(P/T) - 1`
    Exact,
    /// `(P/T) * sum(R_t)`
    #[default]
    Approx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricContext {
    /// Annualized risk-free rate.
    pub risk_free_rate: f64,
    pub periods_per_year: f64,
    /// Cap on |annualized return| applied when building reward components.
    pub r_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Annualization used inside the composite reward.
    pub annualization: AnnualizationMode,
}

impl Default for MetricContext {
    fn default() -> Self {
        Self {
            risk_free_rate: 0.0,
            periods_per_year: 252.0,
            r_max: 3.0,
            beta_min: 0.3,
            beta_max: 3.0,
            annualization: AnnualizationMode::Approx,
        }
    }
}

impl MetricContext {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.periods_per_year > 0.0 && self.periods_per_year.is_finite()) {
            return Err(MetricError::Context("periods_per_year must be > 0".into()));
        }
        if !(self.beta_min > 0.0 && self.beta_min <= self.beta_max && self.beta_max.is_finite()) {
            return Err(MetricError::Context("need 0 < beta_min <= beta_max".into()));
        }
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(MetricError::Context("r_max must be > 0".into()));
        }
        if !self.risk_free_rate.is_finite() {
            return Err(MetricError::Context("risk_free_rate must be finite".into()));
        }
        Ok(())
    }

    /// Risk-free rate per period.
    pub fn periodic_risk_free(&self) -> f64 {
        self.risk_free_rate / self.periods_per_year
    }

    pub fn clamp_beta(&self, raw: f64) -> f64 {
        raw.clamp(self.beta_min, self.beta_max)
    }

    /// Largest |Treynor| attainable with guarded inputs.
    pub fn treynor_bound(&self) -> f64 {
        self.periods_per_year * self.r_max / self.beta_min
    }

    /// Largest |differential return| attainable with guarded inputs.
    pub fn differential_bound(&self) -> f64 {
        2.0 * self.r_max / self.beta_min
    }
}

/// Marker attached to a metric that could not be computed normally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFlag {
    /// Zero denominator with a positive numerator; value is `+inf`.
    PositiveInfinite,
    /// Zero denominator with a negative numerator; value is `-inf`.
    NegativeInfinite,
    /// 0/0 or otherwise undefined; value is 0.
    Degenerate,
}

/// A metric value with an optional flag for sentinel results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flagged {
    pub value: f64,
    pub flag: Option<MetricFlag>,
}

impl Flagged {
    pub fn ok(value: f64) -> Self {
        Self { value, flag: None }
    }

    pub fn flagged(value: f64, flag: MetricFlag) -> Self {
        Self {
            value,
            flag: Some(flag),
        }
    }

    pub fn is_flagged(&self) -> bool {
        self.flag.is_some()
    }
}

/// Beta estimate: raw covariance ratio plus the copy clamped into `[beta_min, beta_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub raw: f64,
    pub clamped: f64,
    pub was_clamped: bool,
}

fn check_nonempty(xs: &[f64]) -> Result<(), MetricError> {
    if xs.is_empty() {
        return Err(MetricError::Empty);
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

fn check_same_len(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn annualized_return(
    returns: &[f64],
    ctx: &MetricContext,
    mode: AnnualizationMode,
) -> Result<f64, MetricError> {
    check_nonempty(returns)?;
    let scale = ctx.periods_per_year / returns.len() as f64;
    match mode {
        AnnualizationMode::Approx => Ok(scale * returns.iter().sum::<f64>()),
        AnnualizationMode::Exact => {
            if let Some((index, &value)) = returns.iter().enumerate().find(|(_, r)| **r <= -1.0) {
                return Err(MetricError::ReturnBelowMinusOne { index, value });
            }
            // log-sum keeps long horizons from overflowing the product
            let log_growth: f64 = returns.iter().map(|r| r.ln_1p()).sum();
            Ok((scale * log_growth).exp_m1())
        }
    }
}

/// `sqrt((1/T) * sum(max(0, -R_t)^2))`.
pub fn downside_deviation(returns: &[f64]) -> Result<f64, MetricError> {
    check_nonempty(returns)?;
    let sq: f64 = returns
        .iter()
        .map(|&r| {
            let d = (-r).max(0.0);
            d * d
        })
        .sum();
    Ok((sq / returns.len() as f64).sqrt())
}

/// `Cov(R_p, R_m) / Var(R_m)` with population normalization.
pub fn beta(portfolio: &[f64], market: &[f64], ctx: &MetricContext) -> Result<BetaEstimate, MetricError> {
    check_nonempty(portfolio)?;
    check_nonempty(market)?;
    check_same_len(portfolio, market)?;
    if portfolio.len() < 2 {
        return Err(MetricError::TooShort {
            needed: 2,
            got: portfolio.len(),
        });
    }
    let mp = mean(portfolio);
    let mm = mean(market);
    let n = portfolio.len() as f64;
    let cov = portfolio
        .iter()
        .zip(market)
        .map(|(p, m)| (p - mp) * (m - mm))
        .sum::<f64>()
        / n;
    let var = market.iter().map(|m| (m - mm).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(MetricError::ZeroMarketVariance);
    }
    let raw = cov / var;
    let clamped = ctx.clamp_beta(raw);
    Ok(BetaEstimate {
        raw,
        clamped,
        was_clamped: clamped != raw,
    })
}

/// `(mu_p - mu_b) / beta` on per-period means.
pub fn differential_return(portfolio: &[f64], benchmark: &[f64], beta_clamped: f64) -> Result<f64, MetricError> {
    check_nonempty(portfolio)?;
    check_nonempty(benchmark)?;
    check_same_len(portfolio, benchmark)?;
    if !(beta_clamped > 0.0) {
        return Err(MetricError::NonPositiveBeta(beta_clamped));
    }
    Ok((mean(portfolio) - mean(benchmark)) / beta_clamped)
}

/// `(R_ann - R_f) / beta`.
pub fn treynor(r_ann: f64, ctx: &MetricContext, beta_clamped: f64) -> Result<f64, MetricError> {
    if !(beta_clamped > 0.0) {
        return Err(MetricError::NonPositiveBeta(beta_clamped));
    }
    Ok((r_ann - ctx.risk_free_rate) / beta_clamped)
}

// Anything below this is treated as a zero standard deviation.
const VOL_EPS: f64 = 1e-14;

/// Annualized Sharpe ratio: per-period excess mean over population std, times `sqrt(P)`.
pub fn sharpe(returns: &[f64], ctx: &MetricContext) -> Result<f64, MetricError> {
    check_nonempty(returns)?;
    if returns.len() < 2 {
        return Err(MetricError::TooShort {
            needed: 2,
            got: returns.len(),
        });
    }
    let sd = std_dev(returns);
    if sd <= VOL_EPS {
        return Err(MetricError::ZeroVolatility);
    }
    Ok((mean(returns) - ctx.periodic_risk_free()) / sd * ctx.periods_per_year.sqrt())
}

/// Annualized Sortino ratio. A zero downside deviation yields a flagged infinite
/// sentinel (or a flagged 0 when the excess mean is also 0) instead of an error.
pub fn sortino(returns: &[f64], ctx: &MetricContext) -> Result<Flagged, MetricError> {
    let dd = downside_deviation(returns)?;
    let excess = mean(returns) - ctx.periodic_risk_free();
    if dd <= VOL_EPS {
        return Ok(if excess > 0.0 {
            Flagged::flagged(f64::INFINITY, MetricFlag::PositiveInfinite)
        } else if excess < 0.0 {
            Flagged::flagged(f64::NEG_INFINITY, MetricFlag::NegativeInfinite)
        } else {
            Flagged::flagged(0.0, MetricFlag::Degenerate)
        });
    }
    Ok(Flagged::ok(excess / dd * ctx.periods_per_year.sqrt()))
}

/// Largest peak-to-trough decline as a fraction of the running peak.
pub fn max_drawdown(equity: &[f64]) -> Result<f64, MetricError> {
    check_nonempty(equity)?;
    if let Some((index, &value)) = equity.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        return Err(MetricError::NonPositiveEquity { index, value });
    }
    let mut peak = equity[0];
    let mut worst = 0.0f64;
    for &v in equity {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    Ok(worst)
}

/// Fraction of trades with strictly positive pnl. Zero-pnl trades count as losses.
pub fn win_rate(trade_pnls: &[f64]) -> Result<f64, MetricError> {
    check_nonempty(trade_pnls)?;
    let wins = trade_pnls.iter().filter(|&&p| p > 0.0).count();
    Ok(wins as f64 / trade_pnls.len() as f64)
}

/// Values of the four reward components plus their inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentValues {
    /// Annualized return after the `r_max` guard.
    pub r_ann: f64,
    /// Annualized return before the guard.
    pub r_ann_raw: f64,
    pub r_ann_clamped: bool,
    pub sigma_down: f64,
    pub d_ret: f64,
    pub t_ry: f64,
    /// Raw beta; 0 when the market series has no variance.
    pub beta: f64,
    /// Beta used in denominators.
    pub beta_clamped: f64,
    pub beta_was_clamped: bool,
    pub degenerate_market: bool,
    pub mu_p: f64,
    pub mu_b: f64,
    pub periods: usize,
}

/// Beta for use inside the reward. A flat market has no defined beta; the raw value
/// is reported as 0 and the denominator falls back to `beta_min`, flagged.
pub fn reward_beta(portfolio: &[f64], market: &[f64], ctx: &MetricContext) -> Result<(BetaEstimate, bool), MetricError> {
    match beta(portfolio, market, ctx) {
        Ok(b) => Ok((b, false)),
        Err(MetricError::ZeroMarketVariance) => Ok((
            BetaEstimate {
                raw: 0.0,
                clamped: ctx.beta_min,
                was_clamped: true,
            },
            true,
        )),
        Err(e) => Err(e),
    }
}

/// Computes all four components with a caller-supplied denominator beta.
pub fn components_with_beta(
    portfolio: &[f64],
    benchmark: &[f64],
    beta: BetaEstimate,
    degenerate_market: bool,
    ctx: &MetricContext,
) -> Result<ComponentValues, MetricError> {
    check_nonempty(portfolio)?;
    check_nonempty(benchmark)?;
    check_same_len(portfolio, benchmark)?;
    let r_ann_raw = annualized_return(portfolio, ctx, ctx.annualization)?;
    let r_ann = r_ann_raw.clamp(-ctx.r_max, ctx.r_max);
    let sigma_down = downside_deviation(portfolio)?;
    let d_ret = differential_return(portfolio, benchmark, beta.clamped)?;
    let t_ry = treynor(r_ann, ctx, beta.clamped)?;
    Ok(ComponentValues {
        r_ann,
        r_ann_raw,
        r_ann_clamped: r_ann != r_ann_raw,
        sigma_down,
        d_ret,
        t_ry,
        beta: beta.raw,
        beta_clamped: beta.clamped,
        beta_was_clamped: beta.was_clamped,
        degenerate_market,
        mu_p: mean(portfolio),
        mu_b: mean(benchmark),
        periods: portfolio.len(),
    })
}

/// Computes all four components, estimating beta from the market series.
pub fn components(
    portfolio: &[f64],
    benchmark: &[f64],
    market: &[f64],
    ctx: &MetricContext,
) -> Result<ComponentValues, MetricError> {
    ctx.validate()?;
    check_same_len(portfolio, market)?;
    let (b, degenerate) = reward_beta(portfolio, market, ctx)?;
    components_with_beta(portfolio, benchmark, b, degenerate, ctx)
}
