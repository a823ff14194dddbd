//! Loading and merging OHLCV files into an aligned panel.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use riskward::marketdata::{align, read_ohlcv_path, AlignedPanel, Bar, PriceSeries};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct TickerSummary {
    pub ticker: String,
    pub rows: usize,
    pub first: NaiveDate,
    pub last: NaiveDate,
}

/// Identical `(ticker, date)` rows seen in more than one file.
#[derive(Debug, Clone, Default, Serialize)]
pub struct DedupReport {
    pub duplicate_rows: usize,
    pub by_ticker: BTreeMap<String, usize>,
}

#[derive(Debug, Default)]
pub struct Merged {
    pub series: BTreeMap<String, BTreeMap<NaiveDate, Bar>>,
    pub dedup: DedupReport,
}

impl Merged {
    pub fn summaries(&self) -> Vec<TickerSummary> {
        self.series
            .iter()
            .filter_map(|(t, bars)| {
                Some(TickerSummary {
                    ticker: t.clone(),
                    rows: bars.len(),
                    first: *bars.keys().next()?,
                    last: *bars.keys().next_back()?,
                })
            })
            .collect()
    }

    pub fn price_series(&self) -> Result<Vec<PriceSeries>, CliError> {
        self.series
            .iter()
            .map(|(t, bars)| {
                PriceSeries::new(t.clone(), bars.values().cloned().collect())
                    .map_err(|e| CliError::Data(e.to_string()))
            })
            .collect()
    }
}

pub fn read_merged(paths: &[PathBuf]) -> Result<Merged, CliError> {
    let mut merged = Merged::default();
    for path in paths {
        merge_file(&mut merged, path)?;
    }
    Ok(merged)
}

fn merge_file(merged: &mut Merged, path: &Path) -> Result<(), CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("data file not found: {}", path.display())));
    }
    let series = read_ohlcv_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    for s in series {
        let slot = merged.series.entry(s.ticker.clone()).or_default();
        for bar in s.bars {
            match slot.get(&bar.date) {
                Some(existing) if *existing == bar => {
                    merged.dedup.duplicate_rows += 1;
                    *merged.dedup.by_ticker.entry(s.ticker.clone()).or_default() += 1;
                }
                Some(_) => {
                    return Err(CliError::Data(format!(
                        "{}: conflicting duplicate row for ({}, {})",
                        path.display(),
                        s.ticker,
                        bar.date
                    )));
                }
                None => {
                    slot.insert(bar.date, bar);
                }
            }
        }
    }
    Ok(())
}

/// Loads, filters to the configured date range and aligns the configured tickers.
pub fn load_panel(cfg: &RunConfig) -> Result<AlignedPanel, CliError> {
    let merged = read_merged(&cfg.data.paths)?;
    let (from, to) = (cfg.data.from, cfg.data.to);
    let in_range = |d: &NaiveDate| from.is_none_or(|f| *d >= f) && to.is_none_or(|t| *d <= t);
    let pick = |ticker: &str| -> Result<PriceSeries, CliError> {
        let bars = merged
            .series
            .get(ticker)
            .ok_or_else(|| CliError::Data(format!("ticker {ticker} not found in data files")))?;
        let kept: Vec<Bar> = bars.values().filter(|b| in_range(&b.date)).cloned().collect();
        if kept.len() < 2 {
            return Err(CliError::Config(format!(
                "date range leaves {} rows for {ticker}; need at least 2",
                kept.len()
            )));
        }
        PriceSeries::new(ticker, kept).map_err(|e| CliError::Data(e.to_string()))
    };
    let market = cfg.market().to_string();
    let tickers: Vec<String> = if cfg.data.tickers.is_empty() {
        merged
            .series
            .keys()
            .filter(|t| **t != cfg.data.benchmark && **t != market)
            .cloned()
            .collect()
    } else {
        cfg.data.tickers.clone()
    };
    if tickers.is_empty() {
        return Err(CliError::Data("no tradable tickers in data files".into()));
    }
    let assets = tickers.iter().map(|t| pick(t)).collect::<Result<Vec<_>, _>>()?;
    let benchmark = pick(&cfg.data.benchmark)?;
    let market = pick(&market)?;
    let panel = align(&assets, &benchmark, &market).map_err(|e| CliError::Data(e.to_string()))?;
    if panel.len() < 2 {
        return Err(CliError::Config("aligned date range has fewer than 2 dates".into()));
    }
    Ok(panel)
}
