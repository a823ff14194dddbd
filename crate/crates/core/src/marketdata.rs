//! OHLCV ingestion, calendar alignment and simple-return construction.
//!
//! Input files use the fixed header `date,open,high,low,close,volume,ticker`
//! with ISO-8601 dates. Prices are assumed to be adjusted closes; no split or
//! dividend handling happens here.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use flate2::read::MultiGzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact header expected on every OHLCV file.
pub const CSV_HEADER: [&str; 7] = ["date", "open", "high", "low", "close", "volume", "ticker"];

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: nonpositive price for {ticker} on {date}")]
    NonPositivePrice { line: u64, ticker: String, date: NaiveDate },
    #[error("line {line}: duplicate row for ({ticker}, {date})")]
    Duplicate { line: u64, ticker: String, date: NaiveDate },
    #[error("series {ticker} has {len} bars, need at least 2")]
    TooShort { ticker: String, len: usize },
    #[error("return {value} at index {index} is not greater than -1")]
    InvalidReturn { index: usize, value: f64 },
    #[error("empty return series")]
    EmptyReturns,
    #[error("no common dates across inputs")]
    EmptyIntersection,
    #[error("bars for {ticker} are not strictly increasing in date")]
    Unordered { ticker: String },
}

/// One daily OHLCV observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub ticker: String,
}

impl Bar {
    fn check(&self, line: u64) -> Result<(), MarketDataError> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite()) || !self.volume.is_finite() {
            return Err(MarketDataError::Malformed {
                line,
                message: "non-finite value".into(),
            });
        }
        if prices.iter().any(|&p| p <= 0.0) {
            return Err(MarketDataError::NonPositivePrice {
                line,
                ticker: self.ticker.clone(),
                date: self.date,
            });
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return Err(MarketDataError::Malformed {
                line,
                message: format!(
                    "inconsistent range for {} on {}: low {} high {} open {} close {}",
                    self.ticker, self.date, self.low, self.high, self.open, self.close
                ),
            });
        }
        if self.volume < 0.0 {
            return Err(MarketDataError::Malformed {
                line,
                message: "negative volume".into(),
            });
        }
        Ok(())
    }
}

/// Date-ordered bars for a single ticker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub ticker: String,
    pub bars: Vec<Bar>,
}

impl PriceSeries {
    pub fn new(ticker: impl Into<String>, bars: Vec<Bar>) -> Result<Self, MarketDataError> {
        let ticker = ticker.into();
        if bars.windows(2).any(|w| w[0].date >= w[1].date) {
            return Err(MarketDataError::Unordered { ticker });
        }
        Ok(Self { ticker, bars })
    }

    /// Builds a series from closes only; open/high/low equal the close and volume is zero.
    pub fn from_closes(
        ticker: impl Into<String>,
        start: NaiveDate,
        closes: &[f64],
    ) -> Result<Self, MarketDataError> {
        let ticker = ticker.into();
        let mut bars = Vec::with_capacity(closes.len());
        let mut date = start;
        for (i, &c) in closes.iter().enumerate() {
            let bar = Bar {
                date,
                open: c,
                high: c,
                low: c,
                close: c,
                volume: 0.0,
                ticker: ticker.clone(),
            };
            bar.check(i as u64 + 1)?;
            bars.push(bar);
            date = date.succ_opt().expect("date overflow");
        }
        Self::new(ticker, bars)
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.bars.iter().map(|b| b.date)
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.bars.first().map(|b| b.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.bars.last().map(|b| b.date)
    }

    fn restrict(&self, keep: &BTreeSet<NaiveDate>) -> PriceSeries {
        PriceSeries {
            ticker: self.ticker.clone(),
            bars: self
                .bars
                .iter()
                .filter(|b| keep.contains(&b.date))
                .cloned()
                .collect(),
        }
    }
}

/// Per-period simple returns. Every value is strictly greater than -1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    values: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(values: Vec<f64>) -> Result<Self, MarketDataError> {
        if values.is_empty() {
            return Err(MarketDataError::EmptyReturns);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > -1.0))
        {
            return Err(MarketDataError::InvalidReturn { index, value });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of periods `T`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for ReturnSeries {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Assets, benchmark and market restricted to one shared calendar.
///
/// `dates` is the price calendar; return `t` runs from `dates[t]` to `dates[t + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPanel {
    pub dates: Vec<NaiveDate>,
    pub assets: Vec<PriceSeries>,
    pub benchmark: PriceSeries,
    pub market: PriceSeries,
    pub asset_returns: Vec<ReturnSeries>,
    pub benchmark_returns: ReturnSeries,
    pub market_returns: ReturnSeries,
}

impl AlignedPanel {
    pub fn stock_dim(&self) -> usize {
        self.assets.len()
    }

    /// Number of price dates.
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Number of return periods, one less than the number of dates.
    pub fn periods(&self) -> usize {
        self.dates.len() - 1
    }

    pub fn tickers(&self) -> Vec<String> {
        self.assets.iter().map(|a| a.ticker.clone()).collect()
    }

    pub fn close(&self, asset: usize, t: usize) -> f64 {
        self.assets[asset].bars[t].close
    }

    /// Dates on which each return period ends.
    pub fn return_dates(&self) -> &[NaiveDate] {
        &self.dates[1..]
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    date: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
    volume: f64,
    ticker: String,
}

/// Parses OHLCV rows into one date-sorted [`PriceSeries`] per ticker, ordered by ticker.
pub fn parse_ohlcv_csv<R: Read>(source: R) -> Result<Vec<PriceSeries>, MarketDataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers().map_err(|e| MarketDataError::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(MarketDataError::Header {
            expected: CSV_HEADER.join(","),
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut grouped: BTreeMap<String, BTreeMap<NaiveDate, Bar>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| MarketDataError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: RawRow = record
            .deserialize(None)
            .map_err(|e| MarketDataError::Malformed {
                line,
                message: e.to_string(),
            })?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| {
            MarketDataError::Malformed {
                line,
                message: format!("bad date `{}`: {e}", row.date),
            }
        })?;
        if row.ticker.is_empty() {
            return Err(MarketDataError::Malformed {
                line,
                message: "empty ticker".into(),
            });
        }
        let bar = Bar {
            date,
            open: row.open,
            high: row.high,
            low: row.low,
            close: row.close,
            volume: row.volume,
            ticker: row.ticker,
        };
        bar.check(line)?;
        let by_date = grouped.entry(bar.ticker.clone()).or_default();
        if by_date.contains_key(&date) {
            return Err(MarketDataError::Duplicate {
                line,
                ticker: bar.ticker,
                date,
            });
        }
        by_date.insert(date, bar);
    }

    Ok(grouped
        .into_iter()
        .map(|(ticker, bars)| PriceSeries {
            ticker,
            bars: bars.into_values().collect(),
        })
        .collect())
}

/// Reads an OHLCV file, transparently decompressing gzip input.
pub fn read_ohlcv_path(path: &Path) -> Result<Vec<PriceSeries>, MarketDataError> {
    let mut file = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let head = std::io::Cursor::new(magic[..n].to_vec());
    let chained = head.chain(file);
    if n == 2 && magic == [0x1f, 0x8b] {
        parse_ohlcv_csv(MultiGzDecoder::new(chained))
    } else {
        parse_ohlcv_csv(chained)
    }
}

/// Writes series in the canonical CSV layout, ticker-major and date-ascending.
pub fn write_ohlcv_csv<W: Write>(series: &[PriceSeries], sink: W) -> Result<(), MarketDataError> {
    let mut writer = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| MarketDataError::Io(std::io::Error::other(e));
    writer.write_record(CSV_HEADER).map_err(csv_err)?;
    for s in series {
        for b in &s.bars {
            writer
                .write_record([
                    b.date.format("%Y-%m-%d").to_string(),
                    b.open.to_string(),
                    b.high.to_string(),
                    b.low.to_string(),
                    b.close.to_string(),
                    b.volume.to_string(),
                    b.ticker.clone(),
                ])
                .map_err(csv_err)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Simple close-to-close returns: `close[t+1] / close[t] - 1`.
pub fn to_returns(prices: &PriceSeries) -> Result<ReturnSeries, MarketDataError> {
    if prices.len() < 2 {
        return Err(MarketDataError::TooShort {
            ticker: prices.ticker.clone(),
            len: prices.len(),
        });
    }
    let values = prices
        .bars
        .windows(2)
        .map(|w| w[1].close / w[0].close - 1.0)
        .collect();
    ReturnSeries::new(values)
}

/// Restricts every input to the intersection of their calendars and derives returns.
pub fn align(
    assets: &[PriceSeries],
    benchmark: &PriceSeries,
    market: &PriceSeries,
) -> Result<AlignedPanel, MarketDataError> {
    if assets.is_empty() {
        return Err(MarketDataError::EmptyIntersection);
    }
    let mut common: BTreeSet<NaiveDate> = benchmark.dates().collect();
    for s in assets.iter().chain(std::iter::once(market)) {
        let dates: BTreeSet<NaiveDate> = s.dates().collect();
        common = common.intersection(&dates).copied().collect();
    }
    if common.is_empty() {
        return Err(MarketDataError::EmptyIntersection);
    }

    let assets: Vec<PriceSeries> = assets.iter().map(|s| s.restrict(&common)).collect();
    let benchmark = benchmark.restrict(&common);
    let market = market.restrict(&common);

    let asset_returns = assets.iter().map(to_returns).collect::<Result<Vec<_>, _>>()?;
    let benchmark_returns = to_returns(&benchmark)?;
    let market_returns = to_returns(&market)?;

    Ok(AlignedPanel {
        dates: common.into_iter().collect(),
        assets,
        benchmark,
        market,
        asset_returns,
        benchmark_returns,
        market_returns,
    })
}
