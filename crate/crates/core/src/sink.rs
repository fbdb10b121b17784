//! Output directory management, per-ticker CSV files and the run summary.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use serde::Serialize;
use thiserror::Error;

use crate::client::quote::{parse_decimal, Bar, BarSeries, BarTime};
use crate::constituents::Ticker;

pub const CSV_HEADER: &str = "Date,Open,High,Low,Close,Volume,Name";
pub const SUMMARY_FILE: &str = "_summary.json";

#[derive(Debug, Error)]
pub enum SinkError {
    #[error("output directory {0} already exists and is not empty (use --overwrite to replace it)")]
    DirectoryExists(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("refusing to write an empty series for {0}")]
    EmptySeries(Ticker),
    #[error("{path}: {reason}")]
    BadCsv { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SinkError + '_ {
    move |source| SinkError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clobber {
    /// Fail if the directory exists with anything in it.
    #[default]
    Refuse,
    /// Delete the existing tree and start empty.
    Recreate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkConfig {
    pub directory: PathBuf,
    pub clobber: Clobber,
    pub rounding_places: Option<u32>,
}

pub fn prepare_directory(cfg: &SinkConfig) -> Result<PathBuf, SinkError> {
    let dir = &cfg.directory;
    if dir.as_os_str().is_empty() {
        return Err(SinkError::Io {
            path: dir.clone(),
            source: io::Error::new(io::ErrorKind::InvalidInput, "empty output path"),
        });
    }
    if dir.exists() {
        let non_empty = !dir.is_dir() || fs::read_dir(dir).map_err(io_err(dir))?.next().is_some();
        match cfg.clobber {
            Clobber::Refuse if non_empty => return Err(SinkError::DirectoryExists(dir.clone())),
            Clobber::Refuse => return Ok(dir.clone()),
            Clobber::Recreate if dir.is_dir() => fs::remove_dir_all(dir).map_err(io_err(dir))?,
            Clobber::Recreate => fs::remove_file(dir).map_err(io_err(dir))?,
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir.clone())
}

pub fn format_price(p: Decimal, rounding: Option<u32>) -> String {
    match rounding {
        Some(places) => format!("{:.*}", places as usize, p),
        None => p.normalize().to_string(),
    }
}

/// Renders the complete CSV document for one series.
pub fn render_csv(series: &BarSeries, rounding: Option<u32>) -> String {
    let name = series.ticker.as_str();
    let mut out = String::with_capacity(64 * (series.bars.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for b in &series.bars {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            b.time,
            format_price(b.open, rounding),
            format_price(b.high, rounding),
            format_price(b.low, rounding),
            format_price(b.close, rounding),
            b.volume,
            name
        ));
    }
    out
}

pub fn ticker_path(dir: &Path, ticker: &Ticker) -> PathBuf {
    dir.join(format!("{}.csv", ticker.as_str()))
}

/// Writes `{dir}/{TICKER}.csv` through a temporary file and a rename, so a
/// crash never leaves a truncated ticker file behind.
pub fn write_ticker_csv(series: &BarSeries, dir: &Path, rounding: Option<u32>) -> Result<PathBuf, SinkError> {
    if series.is_empty() {
        return Err(SinkError::EmptySeries(series.ticker.clone()));
    }
    let path = ticker_path(dir, &series.ticker);
    let mut tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .suffix(".part")
        .tempfile_in(dir)
        .map_err(io_err(dir))?;
    tmp.write_all(render_csv(series, rounding).as_bytes())
        .map_err(io_err(&path))?;
    tmp.as_file().sync_all().map_err(io_err(&path))?;
    tmp.persist(&path).map_err(|e| SinkError::Io {
        path: path.clone(),
        source: e.error,
    })?;
    Ok(path)
}

/// Reads a file produced by [`write_ticker_csv`] back into a series.
pub fn read_ticker_csv(path: &Path) -> Result<BarSeries, SinkError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |reason: String| SinkError::BadCsv {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    let mut ticker = None;
    let mut bars = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(format!("line {} has {} fields", n + 2, f.len())));
        }
        let price = |s: &str| parse_decimal(s).ok_or_else(|| bad(format!("line {}: bad number {s:?}", n + 2)));
        bars.push(Bar {
            time: BarTime::parse(f[0]).ok_or_else(|| bad(format!("line {}: bad date", n + 2)))?,
            open: price(f[1])?,
            high: price(f[2])?,
            low: price(f[3])?,
            close: price(f[4])?,
            volume: f[5].parse().map_err(|_| bad(format!("line {}: bad volume", n + 2)))?,
        });
        let t = Ticker::parse(f[6]).map_err(|e| bad(e.to_string()))?;
        match &ticker {
            None => ticker = Some(t),
            Some(prev) if *prev != t => return Err(bad(format!("mixed Name values {prev} and {t}"))),
            Some(_) => {}
        }
    }
    let ticker = ticker.ok_or_else(|| bad("no data rows".into()))?;
    Ok(BarSeries {
        ticker,
        bars,
        dropped_rows: 0,
        ohlc_violations: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TickerOutcome {
    Collected { rows: usize },
    Ignored,
    Failed { reason: String },
}

/// Per-run tallies. Counts are derived from the per-ticker outcomes, so
/// `requested == collected + ignored_empty + failed` always holds.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FetchSummary {
    per_ticker: BTreeMap<Ticker, TickerOutcome>,
    dropped_rows_total: usize,
}

impl FetchSummary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records (or replaces) a ticker's outcome.
    pub fn record(&mut self, ticker: Ticker, outcome: TickerOutcome, dropped_rows: usize) {
        self.dropped_rows_total += dropped_rows;
        self.per_ticker.insert(ticker, outcome);
    }

    pub fn outcome(&self, ticker: &Ticker) -> Option<&TickerOutcome> {
        self.per_ticker.get(ticker)
    }

    pub fn per_ticker(&self) -> &BTreeMap<Ticker, TickerOutcome> {
        &self.per_ticker
    }

    pub fn requested(&self) -> usize {
        self.per_ticker.len()
    }

    pub fn collected(&self) -> usize {
        self.count(|o| matches!(o, TickerOutcome::Collected { .. }))
    }

    pub fn ignored_empty(&self) -> usize {
        self.count(|o| matches!(o, TickerOutcome::Ignored))
    }

    pub fn failed(&self) -> usize {
        self.count(|o| matches!(o, TickerOutcome::Failed { .. }))
    }

    pub fn dropped_rows_total(&self) -> usize {
        self.dropped_rows_total
    }

    fn count(&self, pred: impl Fn(&TickerOutcome) -> bool) -> usize {
        self.per_ticker.values().filter(|o| pred(o)).count()
    }
}

/// Provenance recorded next to the counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunMetadata {
    pub index: String,
    pub start: String,
    pub end: String,
    pub interval: String,
    pub tool_version: String,
    pub generated_at: String,
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    #[serde(flatten)]
    meta: &'a RunMetadata,
    requested: usize,
    collected: usize,
    ignored_empty: usize,
    failed: usize,
    dropped_rows_total: usize,
    per_ticker: &'a BTreeMap<Ticker, TickerOutcome>,
}

pub fn summary_json(summary: &FetchSummary, meta: &RunMetadata) -> String {
    let doc = SummaryDocument {
        meta,
        requested: summary.requested(),
        collected: summary.collected(),
        ignored_empty: summary.ignored_empty(),
        failed: summary.failed(),
        dropped_rows_total: summary.dropped_rows_total(),
        per_ticker: summary.per_ticker(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("summary serializes");
    s.push('\n');
    s
}

pub fn write_summary(summary: &FetchSummary, meta: &RunMetadata, dir: &Path) -> Result<PathBuf, SinkError> {
    let path = dir.join(SUMMARY_FILE);
    let mut tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .suffix(".part")
        .tempfile_in(dir)
        .map_err(io_err(dir))?;
    tmp.write_all(summary_json(summary, meta).as_bytes())
        .map_err(io_err(&path))?;
    tmp.persist(&path).map_err(|e| SinkError::Io {
        path: path.clone(),
        source: e.error,
    })?;
    Ok(path)
}
