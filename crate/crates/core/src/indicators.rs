//! Technical indicators that populate the environment observation.
//!
//! Every sequence has the same length as its input. Leading entries without
//! enough history are reported through a warm-up count and hold 0.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::marketdata::AlignedPanel;

/// Diagonal jitter tried when a turbulence covariance is not positive definite.
pub const TURBULENCE_JITTER: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum IndicatorError {
    #[error("empty input")]
    Empty,
    #[error("span/window must be at least {min}, got {got}")]
    BadWindow { min: usize, got: usize },
    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid config: {0}")]
    Config(String),
}

/// A full-length indicator sequence whose first `warm_up` values are placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rolling {
    pub values: Vec<f64>,
    pub warm_up: usize,
}

impl Rolling {
    pub fn mask(&self) -> Vec<bool> {
        (0..self.values.len()).map(|i| i < self.warm_up).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    Volume,
    Macd,
    BollUpper,
    BollLower,
    Rsi,
    Cci,
    Dmi,
    SmaShort,
    SmaLong,
    Turbulence,
}

impl IndicatorKind {
    pub const ALL: [IndicatorKind; 10] = [
        IndicatorKind::Volume,
        IndicatorKind::Macd,
        IndicatorKind::BollUpper,
        IndicatorKind::BollLower,
        IndicatorKind::Rsi,
        IndicatorKind::Cci,
        IndicatorKind::Dmi,
        IndicatorKind::SmaShort,
        IndicatorKind::SmaLong,
        IndicatorKind::Turbulence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IndicatorKind::Volume => "volume",
            IndicatorKind::Macd => "macd",
            IndicatorKind::BollUpper => "boll_upper",
            IndicatorKind::BollLower => "boll_lower",
            IndicatorKind::Rsi => "rsi",
            IndicatorKind::Cci => "cci",
            IndicatorKind::Dmi => "dmi",
            IndicatorKind::SmaShort => "sma_short",
            IndicatorKind::SmaLong => "sma_long",
            IndicatorKind::Turbulence => "turbulence",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorConfig {
    pub macd_fast: usize,
    pub macd_slow: usize,
    pub bollinger_window: usize,
    pub bollinger_k: f64,
    pub rsi_window: usize,
    pub cci_window: usize,
    pub dmi_window: usize,
    pub sma_short: usize,
    pub sma_long: usize,
    pub turbulence_lookback: usize,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            macd_fast: 12,
            macd_slow: 26,
            bollinger_window: 20,
            bollinger_k: 2.0,
            rsi_window: 14,
            cci_window: 14,
            dmi_window: 14,
            sma_short: 30,
            sma_long: 60,
            turbulence_lookback: 252,
        }
    }
}

impl IndicatorConfig {
    pub fn validate(&self) -> Result<(), IndicatorError> {
        let windows = [
            ("macd_fast", self.macd_fast),
            ("macd_slow", self.macd_slow),
            ("bollinger_window", self.bollinger_window),
            ("rsi_window", self.rsi_window),
            ("cci_window", self.cci_window),
            ("dmi_window", self.dmi_window),
            ("sma_short", self.sma_short),
            ("sma_long", self.sma_long),
            ("turbulence_lookback", self.turbulence_lookback),
        ];
        if let Some((name, w)) = windows.iter().find(|(_, w)| *w < 2) {
            return Err(IndicatorError::Config(format!("{name} = {w} is below 2")));
        }
        if self.macd_fast >= self.macd_slow {
            return Err(IndicatorError::Config(format!(
                "macd fast span {} must be below slow span {}",
                self.macd_fast, self.macd_slow
            )));
        }
        if !(self.bollinger_k.is_finite() && self.bollinger_k >= 0.0) {
            return Err(IndicatorError::Config("bollinger_k must be >= 0".into()));
        }
        Ok(())
    }

    /// Shortest panel (in dates) for which every indicator produces at least one value.
    pub fn min_history(&self) -> usize {
        [
            self.macd_slow,
            self.bollinger_window,
            self.rsi_window + 1,
            self.cci_window,
            2 * self.dmi_window,
            self.sma_short,
            self.sma_long,
            self.turbulence_lookback + 2,
        ]
        .into_iter()
        .max()
        .unwrap()
    }
}

/// Exponential moving average with `alpha = 2 / (span + 1)`, seeded with the first value.
pub fn ema(values: &[f64], span: usize) -> Result<Vec<f64>, IndicatorError> {
    if span < 1 {
        return Err(IndicatorError::BadWindow { min: 1, got: span });
    }
    let first = *values.first().ok_or(IndicatorError::Empty)?;
    let alpha = 2.0 / (span as f64 + 1.0);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = first;
    out.push(acc);
    for &v in &values[1..] {
        acc = alpha * v + (1.0 - alpha) * acc;
        out.push(acc);
    }
    Ok(out)
}

/// MACD line, `EMA(fast) - EMA(slow)`.
pub fn macd(closes: &[f64], fast: usize, slow: usize) -> Result<Rolling, IndicatorError> {
    if fast >= slow {
        return Err(IndicatorError::Config(format!(
            "macd fast span {fast} must be below slow span {slow}"
        )));
    }
    let f = ema(closes, fast)?;
    let s = ema(closes, slow)?;
    Ok(Rolling {
        values: f.iter().zip(&s).map(|(a, b)| a - b).collect(),
        warm_up: (slow - 1).min(closes.len()),
    })
}

fn check_window(len: usize, window: usize, needed: usize) -> Result<(), IndicatorError> {
    if window < 1 {
        return Err(IndicatorError::BadWindow { min: 1, got: window });
    }
    if len < needed {
        return Err(IndicatorError::InsufficientData { needed, got: len });
    }
    Ok(())
}

fn window_mean(w: &[f64]) -> f64 {
    w.iter().sum::<f64>() / w.len() as f64
}

/// Rolling arithmetic mean.
pub fn sma(values: &[f64], window: usize) -> Result<Rolling, IndicatorError> {
    check_window(values.len(), window, window)?;
    let mut out = vec![0.0; values.len()];
    for t in window - 1..values.len() {
        out[t] = window_mean(&values[t + 1 - window..=t]);
    }
    Ok(Rolling {
        values: out,
        warm_up: window - 1,
    })
}

/// Bollinger bands: rolling mean plus/minus `k` rolling population standard deviations.
pub fn bollinger(
    closes: &[f64],
    window: usize,
    k: f64,
) -> Result<(Rolling, Rolling), IndicatorError> {
    check_window(closes.len(), window, window)?;
    let mut upper = vec![0.0; closes.len()];
    let mut lower = vec![0.0; closes.len()];
    for t in window - 1..closes.len() {
        let w = &closes[t + 1 - window..=t];
        let mean = window_mean(w);
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let band = k * var.sqrt();
        upper[t] = mean + band;
        lower[t] = mean - band;
    }
    Ok((
        Rolling {
            values: upper,
            warm_up: window - 1,
        },
        Rolling {
            values: lower,
            warm_up: window - 1,
        },
    ))
}

fn rsi_from(avg_gain: f64, avg_loss: f64) -> f64 {
    if avg_loss == 0.0 {
        // flat history reads as neutral
        if avg_gain == 0.0 {
            50.0
        } else {
            100.0
        }
    } else {
        100.0 - 100.0 / (1.0 + avg_gain / avg_loss)
    }
}

/// Wilder relative strength index. The first value appears at index `window`.
pub fn rsi(closes: &[f64], window: usize) -> Result<Rolling, IndicatorError> {
    check_window(closes.len(), window, window + 1)?;
    let n = window as f64;
    let changes: Vec<f64> = closes.windows(2).map(|w| w[1] - w[0]).collect();
    let mut gain = changes[..window].iter().map(|c| c.max(0.0)).sum::<f64>() / n;
    let mut loss = changes[..window].iter().map(|c| (-c).max(0.0)).sum::<f64>() / n;
    let mut out = vec![0.0; closes.len()];
    out[window] = rsi_from(gain, loss);
    for t in window + 1..closes.len() {
        let c = changes[t - 1];
        gain = (gain * (n - 1.0) + c.max(0.0)) / n;
        loss = (loss * (n - 1.0) + (-c).max(0.0)) / n;
        out[t] = rsi_from(gain, loss);
    }
    Ok(Rolling {
        values: out,
        warm_up: window,
    })
}

/// Commodity channel index on the typical price `(H + L + C) / 3`.
pub fn cci(high: &[f64], low: &[f64], close: &[f64], window: usize) -> Result<Rolling, IndicatorError> {
    check_window(close.len(), window, window)?;
    let tp: Vec<f64> = high
        .iter()
        .zip(low)
        .zip(close)
        .map(|((h, l), c)| (h + l + c) / 3.0)
        .collect();
    let mut out = vec![0.0; tp.len()];
    for t in window - 1..tp.len() {
        let w = &tp[t + 1 - window..=t];
        let mean = window_mean(w);
        let mad = w.iter().map(|x| (x - mean).abs()).sum::<f64>() / w.len() as f64;
        out[t] = if mad == 0.0 {
            0.0
        } else {
            (tp[t] - mean) / (0.015 * mad)
        };
    }
    Ok(Rolling {
        values: out,
        warm_up: window - 1,
    })
}

/// Wilder average directional index built from the +DI/-DI pair.
///
/// The first value appears at index `2 * window - 1`.
pub fn adx(high: &[f64], low: &[f64], close: &[f64], window: usize) -> Result<Rolling, IndicatorError> {
    check_window(close.len(), window, 2 * window)?;
    let len = close.len();
    let n = window as f64;
    let mut tr = vec![0.0; len];
    let mut plus_dm = vec![0.0; len];
    let mut minus_dm = vec![0.0; len];
    for t in 1..len {
        let up = high[t] - high[t - 1];
        let down = low[t - 1] - low[t];
        plus_dm[t] = if up > down && up > 0.0 { up } else { 0.0 };
        minus_dm[t] = if down > up && down > 0.0 { down } else { 0.0 };
        tr[t] = (high[t] - low[t])
            .max((high[t] - close[t - 1]).abs())
            .max((low[t] - close[t - 1]).abs());
    }

    let mut s_tr: f64 = tr[1..=window].iter().sum();
    let mut s_plus: f64 = plus_dm[1..=window].iter().sum();
    let mut s_minus: f64 = minus_dm[1..=window].iter().sum();
    let dx_at = |s_tr: f64, s_plus: f64, s_minus: f64| {
        if s_tr == 0.0 {
            return 0.0;
        }
        let pdi = 100.0 * s_plus / s_tr;
        let mdi = 100.0 * s_minus / s_tr;
        if pdi + mdi == 0.0 {
            0.0
        } else {
            100.0 * (pdi - mdi).abs() / (pdi + mdi)
        }
    };
    let mut dx = vec![0.0; len];
    dx[window] = dx_at(s_tr, s_plus, s_minus);
    for t in window + 1..len {
        s_tr = s_tr - s_tr / n + tr[t];
        s_plus = s_plus - s_plus / n + plus_dm[t];
        s_minus = s_minus - s_minus / n + minus_dm[t];
        dx[t] = dx_at(s_tr, s_plus, s_minus);
    }

    let first = 2 * window - 1;
    let mut out = vec![0.0; len];
    let mut adx = dx[window..=first].iter().sum::<f64>() / n;
    out[first] = adx;
    for t in first + 1..len {
        adx = (adx * (n - 1.0) + dx[t]) / n;
        out[t] = adx;
    }
    Ok(Rolling {
        values: out,
        warm_up: first,
    })
}

/// Squared Mahalanobis distance `(x - mu)' S^-1 (x - mu)`, or `None` when `S` is
/// singular even after diagonal jitter.
pub fn mahalanobis_sq(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Option<f64> {
    let diff = DVector::from_iterator(x.len(), x.iter().zip(mean).map(|(a, b)| a - b));
    let chol = cov.clone().cholesky().or_else(|| {
        let jittered = cov + DMatrix::identity(cov.nrows(), cov.ncols()) * TURBULENCE_JITTER;
        jittered.cholesky()
    })?;
    let solved = chol.solve(&diff);
    Some(diff.dot(&solved).max(0.0))
}

/// Market turbulence per price date: each day's cross-asset return vector measured
/// against the mean and population covariance of the preceding `lookback` return vectors.
///
/// `asset_returns[i][t]` is asset `i`'s return over period `t`. The output has one
/// entry per price date (`periods + 1`); price date `t + 1` carries the score of return `t`.
pub fn turbulence(asset_returns: &[&[f64]], lookback: usize) -> Result<Rolling, IndicatorError> {
    let n = asset_returns.len();
    if n == 0 {
        return Err(IndicatorError::Empty);
    }
    let periods = asset_returns[0].len();
    if asset_returns.iter().any(|r| r.len() != periods) {
        return Err(IndicatorError::Config("asset return lengths differ".into()));
    }
    check_window(periods, lookback, lookback + 1)?;

    let mut out = vec![0.0; periods + 1];
    for t in lookback..periods {
        let mut mean = vec![0.0; n];
        for (i, r) in asset_returns.iter().enumerate() {
            mean[i] = window_mean(&r[t - lookback..t]);
        }
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let c = (t - lookback..t)
                    .map(|s| (asset_returns[i][s] - mean[i]) * (asset_returns[j][s] - mean[j]))
                    .sum::<f64>()
                    / lookback as f64;
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        let x: Vec<f64> = asset_returns.iter().map(|r| r[t]).collect();
        out[t + 1] = mahalanobis_sq(&x, &mean, &cov).unwrap_or(0.0);
    }
    Ok(Rolling {
        values: out,
        warm_up: lookback + 1,
    })
}

/// All indicators for every asset of a panel, on the panel's price calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSet {
    pub tickers: Vec<String>,
    pub dates: Vec<chrono::NaiveDate>,
    /// `series[kind][asset]`, ordered as [`IndicatorKind::ALL`].
    series: Vec<Vec<Rolling>>,
}

impl IndicatorSet {
    pub fn rolling(&self, kind: IndicatorKind, asset: usize) -> &Rolling {
        &self.series[kind.index()][asset]
    }

    pub fn value(&self, kind: IndicatorKind, asset: usize, t: usize) -> f64 {
        self.series[kind.index()][asset].values[t]
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// First date index at which every requested indicator has left warm-up.
    pub fn warm_up(&self, kinds: &[IndicatorKind]) -> usize {
        kinds
            .iter()
            .flat_map(|k| self.series[k.index()].iter().map(|r| r.warm_up))
            .max()
            .unwrap_or(0)
    }

    /// Long-format dump: one row per (date, ticker), one column per indicator.
    pub fn write_csv<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["date".to_string(), "ticker".to_string()];
        header.extend(IndicatorKind::ALL.iter().map(|k| k.name().to_string()));
        header.push("warm_up".into());
        w.write_record(&header).map_err(std::io::Error::other)?;
        let all_warm = self.warm_up(&IndicatorKind::ALL);
        for (t, date) in self.dates.iter().enumerate() {
            for (a, ticker) in self.tickers.iter().enumerate() {
                let mut row = vec![date.format("%Y-%m-%d").to_string(), ticker.clone()];
                row.extend(
                    IndicatorKind::ALL
                        .iter()
                        .map(|&k| self.value(k, a, t).to_string()),
                );
                row.push(u8::from(t < all_warm).to_string());
                w.write_record(&row).map_err(std::io::Error::other)?;
            }
        }
        w.flush()
    }
}

/// Computes every indicator for every asset in `panel`.
pub fn extended_indicators(
    panel: &AlignedPanel,
    config: &IndicatorConfig,
) -> Result<IndicatorSet, IndicatorError> {
    config.validate()?;
    let len = panel.len();
    let needed = config.min_history();
    if len < needed {
        return Err(IndicatorError::InsufficientData { needed, got: len });
    }

    let returns: Vec<&[f64]> = panel.asset_returns.iter().map(|r| r.values()).collect();
    let turb = turbulence(&returns, config.turbulence_lookback)?;

    let mut series: Vec<Vec<Rolling>> = vec![Vec::with_capacity(panel.stock_dim()); IndicatorKind::ALL.len()];
    for asset in &panel.assets {
        let close: Vec<f64> = asset.bars.iter().map(|b| b.close).collect();
        let high: Vec<f64> = asset.bars.iter().map(|b| b.high).collect();
        let low: Vec<f64> = asset.bars.iter().map(|b| b.low).collect();
        let volume: Vec<f64> = asset.bars.iter().map(|b| b.volume).collect();
        let (upper, lower) = bollinger(&close, config.bollinger_window, config.bollinger_k)?;
        let per_asset = [
            Rolling {
                values: volume,
                warm_up: 0,
            },
            macd(&close, config.macd_fast, config.macd_slow)?,
            upper,
            lower,
            rsi(&close, config.rsi_window)?,
            cci(&high, &low, &close, config.cci_window)?,
            adx(&high, &low, &close, config.dmi_window)?,
            sma(&close, config.sma_short)?,
            sma(&close, config.sma_long)?,
            turb.clone(),
        ];
        for (slot, r) in series.iter_mut().zip(per_asset) {
            slot.push(r);
        }
    }

    Ok(IndicatorSet {
        tickers: panel.tickers(),
        dates: panel.dates.clone(),
        series,
    })
}
