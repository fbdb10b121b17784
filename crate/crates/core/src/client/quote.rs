//! Quote CSV handling: raw table parsing, adjusted-close substitution and
//! conversion into a validated bar series.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use thiserror::Error;

use crate::constituents::Ticker;
use crate::timeframe::{format_timestamp, parse_civil_date, to_epoch_seconds, CivilDate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuoteError {
    #[error("empty response body")]
    EmptyBody,
    #[error("quote CSV schema: {0}")]
    Schema(String),
    #[error("duplicate bar for {0}")]
    DuplicateDate(String),
}

pub const DATE: &str = "Date";
pub const OPEN: &str = "Open";
pub const HIGH: &str = "High";
pub const LOW: &str = "Low";
pub const CLOSE: &str = "Close";
pub const ADJ_CLOSE: &str = "Adj Close";
pub const VOLUME: &str = "Volume";

pub const REQUIRED_COLUMNS: [&str; 7] = [DATE, OPEN, HIGH, LOW, CLOSE, ADJ_CLOSE, VOLUME];
pub const ADJUSTED_COLUMNS: [&str; 6] = [DATE, OPEN, HIGH, LOW, CLOSE, VOLUME];

/// Header plus string rows, straight out of the CSV.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Rows dropped for having the wrong number of fields.
    pub malformed_rows: usize,
}

impl RawTable {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    fn require(&self, name: &str) -> Result<usize, QuoteError> {
        self.index_of(name)
            .ok_or_else(|| QuoteError::Schema(format!("missing column {name:?} in {:?}", self.columns)))
    }
}

/// Parses a quote download body. Intraday downloads label the first
/// column `Datetime`; it is renamed to `Date`.
pub fn parse_quote_csv(body: &[u8]) -> Result<RawTable, QuoteError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(QuoteError::EmptyBody);
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(body);
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| QuoteError::Schema(e.to_string()))?
        .iter()
        .map(|h| {
            let h = h.trim().trim_start_matches('\u{feff}');
            if h == "Datetime" { DATE } else { h }.to_string()
        })
        .collect();
    let mut table = RawTable {
        columns,
        ..RawTable::default()
    };
    for name in REQUIRED_COLUMNS {
        table.require(name)?;
    }
    for record in reader.records() {
        let record = record.map_err(|e| QuoteError::Schema(e.to_string()))?;
        if record.len() != table.columns.len() {
            table.malformed_rows += 1;
            continue;
        }
        table.rows.push(record.iter().map(|f| f.trim().to_string()).collect());
    }
    Ok(table)
}

/// Drops `Close`, renames `Adj Close` to `Close`, and orders the columns
/// `Date, Open, High, Low, Close, Volume` followed by any extras.
pub fn substitute_adjusted_close(table: &RawTable) -> Result<RawTable, QuoteError> {
    table.require(CLOSE)?;
    let adj = table.require(ADJ_CLOSE)?;
    let mut picks = Vec::with_capacity(table.columns.len() - 1);
    for name in ADJUSTED_COLUMNS {
        picks.push(if name == CLOSE { adj } else { table.require(name)? });
    }
    for (i, name) in table.columns.iter().enumerate() {
        if !REQUIRED_COLUMNS.contains(&name.as_str()) {
            picks.push(i);
        }
    }
    let columns = picks
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            if pos < ADJUSTED_COLUMNS.len() {
                ADJUSTED_COLUMNS[pos].to_string()
            } else {
                table.columns[i].clone()
            }
        })
        .collect();
    let rows = table
        .rows
        .iter()
        .map(|row| picks.iter().map(|&i| row[i].clone()).collect())
        .collect();
    Ok(RawTable {
        columns,
        rows,
        malformed_rows: table.malformed_rows,
    })
}

/// Bar timestamp: a trading day for daily and longer bars, a UTC instant
/// for intraday bars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BarTime {
    Day(CivilDate),
    Instant(i64),
}

impl BarTime {
    pub fn epoch_seconds(self) -> i64 {
        match self {
            BarTime::Day(d) => to_epoch_seconds(d, 0, 0, 0),
            BarTime::Instant(s) => s,
        }
    }

    /// Accepts `yyyy-mm-dd`, or `yyyy-mm-dd HH:MM:SS` with an optional
    /// `±HH:MM` offset (converted to UTC).
    pub fn parse(text: &str) -> Option<BarTime> {
        let text = text.trim();
        if text.len() == 10 {
            return parse_civil_date(text).ok().map(BarTime::Day);
        }
        let date = parse_civil_date(text.get(..10)?).ok()?;
        let rest = text.get(10..)?;
        let rest = rest.strip_prefix(' ').or_else(|| rest.strip_prefix('T'))?;
        let (clock, offset) = match rest.get(8..) {
            Some("") | Some("Z") => (rest.get(..8)?, 0),
            Some(off) => (rest.get(..8)?, parse_offset(off)?),
            None => return None,
        };
        let b = clock.as_bytes();
        if b[2] != b':' || b[5] != b':' {
            return None;
        }
        let hh: u32 = clock[0..2].parse().ok()?;
        let mm: u32 = clock[3..5].parse().ok()?;
        let ss: u32 = clock[6..8].parse().ok()?;
        if hh >= 24 || mm >= 60 || ss >= 60 {
            return None;
        }
        Some(BarTime::Instant(to_epoch_seconds(date, hh, mm, ss) - offset))
    }
}

fn parse_offset(s: &str) -> Option<i64> {
    let sign = match s.as_bytes().first()? {
        b'+' => 1,
        b'-' => -1,
        _ => return None,
    };
    let (h, m) = s[1..].split_once(':')?;
    if h.len() != 2 || m.len() != 2 {
        return None;
    }
    let h: i64 = h.parse().ok()?;
    let m: i64 = m.parse().ok()?;
    Some(sign * (h * 3600 + m * 60))
}

impl fmt::Display for BarTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BarTime::Day(d) => d.fmt(f),
            BarTime::Instant(s) => f.write_str(&format_timestamp(*s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bar {
    pub time: BarTime,
    pub open: Decimal,
    pub high: Decimal,
    pub low: Decimal,
    pub close: Decimal,
    pub volume: u64,
}

impl Bar {
    /// `low <= min(open, close)` and `high >= max(open, close)`.
    pub fn ohlc_consistent(&self) -> bool {
        self.low <= self.open.min(self.close) && self.high >= self.open.max(self.close)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarSeries {
    pub ticker: Ticker,
    pub bars: Vec<Bar>,
    /// Rows left out: `null`/unparseable cells, malformed CSV rows, and
    /// OHLC violations under strict mode.
    pub dropped_rows: usize,
    /// Rows whose OHLC relationship is inconsistent (kept unless strict).
    pub ohlc_violations: usize,
}

impl BarSeries {
    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeriesOptions {
    /// Decimal places for half-even price rounding; `None` keeps prices as sent.
    pub rounding: Option<u32>,
    /// Drop bars whose OHLC values are inconsistent instead of keeping them.
    pub strict: bool,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions {
            rounding: Some(2),
            strict: false,
        }
    }
}

/// Rounds half to even on the decimal value.
pub fn round_price(p: Decimal, places: u32) -> Decimal {
    p.round_dp_with_strategy(places, RoundingStrategy::MidpointNearestEven)
}

pub fn parse_decimal(token: &str) -> Option<Decimal> {
    let t = token.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("null") {
        return None;
    }
    Decimal::from_str(t).or_else(|_| Decimal::from_scientific(t)).ok()
}

fn parse_price(token: &str) -> Option<Decimal> {
    parse_decimal(token).filter(|d| !d.is_sign_negative() || d.is_zero())
}

/// Whole shares; fractional values are floored.
fn parse_volume(token: &str) -> Option<u64> {
    parse_decimal(token)
        .filter(|d| !d.is_sign_negative() || d.is_zero())
        .and_then(|d| d.floor().to_u64())
}

/// Builds a sorted bar series from an adjusted table.
pub fn to_bar_series(table: &RawTable, ticker: &Ticker, opts: SeriesOptions) -> Result<BarSeries, QuoteError> {
    let idx: Vec<usize> = ADJUSTED_COLUMNS
        .iter()
        .map(|c| table.require(c))
        .collect::<Result<_, _>>()?;
    let mut series = BarSeries {
        ticker: ticker.clone(),
        bars: Vec::with_capacity(table.rows.len()),
        dropped_rows: table.malformed_rows,
        ohlc_violations: 0,
    };

    for row in &table.rows {
        let cell = |k: usize| row[idx[k]].as_str();
        let parsed = (|| {
            Some(Bar {
                time: BarTime::parse(cell(0))?,
                open: parse_price(cell(1))?,
                high: parse_price(cell(2))?,
                low: parse_price(cell(3))?,
                close: parse_price(cell(4))?,
                volume: parse_volume(cell(5))?,
            })
        })();
        let Some(mut bar) = parsed else {
            series.dropped_rows += 1;
            continue;
        };
        if let Some(places) = opts.rounding {
            for p in [&mut bar.open, &mut bar.high, &mut bar.low, &mut bar.close] {
                *p = round_price(*p, places);
            }
        }
        if !bar.ohlc_consistent() {
            series.ohlc_violations += 1;
            if opts.strict {
                log::warn!("{ticker} {}: inconsistent OHLC, row rejected", bar.time);
                series.dropped_rows += 1;
                continue;
            }
            log::warn!("{ticker} {}: inconsistent OHLC, row kept", bar.time);
        }
        series.bars.push(bar);
    }

    series.bars.sort_by_key(|b| b.time.epoch_seconds());
    if let Some(w) = series
        .bars
        .windows(2)
        .find(|w| w[0].time.epoch_seconds().cmp(&w[1].time.epoch_seconds()) == Ordering::Equal)
    {
        return Err(QuoteError::DuplicateDate(w[1].time.to_string()));
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(s: &str) -> Decimal {
        Decimal::from_str(s).unwrap()
    }

    fn ticker() -> Ticker {
        Ticker::parse("MSFT").unwrap()
    }

    const HEADER: &str = "Date,Open,High,Low,Close,Adj Close,Volume";

    #[test]
    fn parses_one_row() {
        let body = format!("{HEADER}\n2020-01-02,10.0,12.0,9.0,11.0,10.5,1000\n");
        let t = parse_quote_csv(body.as_bytes()).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.columns.len(), 7);
    }

    #[test]
    fn header_only_is_zero_rows() {
        let t = parse_quote_csv(format!("{HEADER}\n").as_bytes()).unwrap();
        assert!(t.rows.is_empty());
    }

    #[test]
    fn empty_body() {
        assert_eq!(parse_quote_csv(b""), Err(QuoteError::EmptyBody));
        assert_eq!(parse_quote_csv(b"\n  \n"), Err(QuoteError::EmptyBody));
    }

    #[test]
    fn missing_adj_close_is_schema_error() {
        let err = parse_quote_csv(b"Date,Open,High,Low,Close,Volume\n2020-01-02,1,1,1,1,1\n");
        assert!(matches!(err, Err(QuoteError::Schema(_))));
    }

    #[test]
    fn ragged_rows_are_counted() {
        let body = format!("{HEADER}\n2020-01-02,1,1,1,1,1,1\n2020-01-03,1,1\n");
        let t = parse_quote_csv(body.as_bytes()).unwrap();
        assert_eq!((t.rows.len(), t.malformed_rows), (1, 1));
    }

    #[test]
    fn extra_columns_survive_substitution() {
        let body = "Date,Open,High,Low,Close,Adj Close,Volume,Dividends\n2020-01-02,10,12,9,11,10.5,1000,0.2\n";
        let t = substitute_adjusted_close(&parse_quote_csv(body.as_bytes()).unwrap()).unwrap();
        assert_eq!(
            t.columns,
            vec!["Date", "Open", "High", "Low", "Close", "Volume", "Dividends"]
        );
        assert_eq!(t.rows[0], vec!["2020-01-02", "10", "12", "9", "10.5", "1000", "0.2"]);
    }

    #[test]
    fn substitution_column_surgery() {
        let raw = RawTable {
            columns: ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"]
                .map(String::from)
                .to_vec(),
            rows: vec![["2020-01-02", "10.0", "12.0", "9.0", "11.0", "10.5", "1000"]
                .map(String::from)
                .to_vec()],
            malformed_rows: 0,
        };
        let t = substitute_adjusted_close(&raw).unwrap();
        assert_eq!(t.columns, ADJUSTED_COLUMNS.map(String::from).to_vec());
        assert_eq!(t.rows[0], vec!["2020-01-02", "10.0", "12.0", "9.0", "10.5", "1000"]);

        let mut missing = raw.clone();
        missing.columns[5] = "Something".into();
        assert!(matches!(
            substitute_adjusted_close(&missing),
            Err(QuoteError::Schema(_))
        ));
    }

    fn adjusted(rows: &[&str]) -> RawTable {
        let body = format!("{HEADER}\n{}\n", rows.join("\n"));
        substitute_adjusted_close(&parse_quote_csv(body.as_bytes()).unwrap()).unwrap()
    }

    #[test]
    fn rounds_half_even_to_two_places() {
        let s = to_bar_series(
            &adjusted(&["2020-01-02,10.128,10.125,10.115,10.124,10.124,1000"]),
            &ticker(),
            SeriesOptions {
                rounding: Some(2),
                strict: false,
            },
        )
        .unwrap();
        let b = &s.bars[0];
        assert_eq!(b.open, dec("10.13"));
        assert_eq!(b.high, dec("10.12"));
        assert_eq!(b.low, dec("10.12"));
        assert_eq!(b.close, dec("10.12"));
    }

    #[test]
    fn rounding_disabled_passes_values_through() {
        let s = to_bar_series(
            &adjusted(&["2020-01-02,10.128456,10.2,10.0,10.1,10.123456789,1000"]),
            &ticker(),
            SeriesOptions {
                rounding: None,
                strict: false,
            },
        )
        .unwrap();
        assert_eq!(s.bars[0].open, dec("10.128456"));
        assert_eq!(s.bars[0].close, dec("10.123456789"));
    }

    #[test]
    fn null_rows_are_dropped() {
        let s = to_bar_series(
            &adjusted(&[
                "2020-01-02,10,12,9,11,10.5,1000",
                "2020-01-03,null,null,null,null,null,null",
                "2020-01-06,10,12,9,null,10.5,1000",
            ]),
            &ticker(),
            SeriesOptions::default(),
        )
        .unwrap();
        // the third row's raw Close is gone after substitution, so it survives
        assert_eq!(s.len(), 2);
        assert_eq!(s.dropped_rows, 1);

        let s = to_bar_series(
            &adjusted(&["2020-01-02,10,12,9,11,null,1000", "2020-01-03,10,12,9,11,abc,1000"]),
            &ticker(),
            SeriesOptions::default(),
        )
        .unwrap();
        assert_eq!((s.len(), s.dropped_rows), (0, 2));
    }

    #[test]
    fn sorts_and_rejects_duplicates() {
        let s = to_bar_series(
            &adjusted(&["2020-01-03,1,1,1,1,1,1", "2020-01-02,1,1,1,1,1,1"]),
            &ticker(),
            SeriesOptions::default(),
        )
        .unwrap();
        assert_eq!(s.bars[0].time.to_string(), "2020-01-02");
        let err = to_bar_series(
            &adjusted(&["2020-01-02,1,1,1,1,1,1", "2020-01-02,1,1,1,1,1,1"]),
            &ticker(),
            SeriesOptions::default(),
        );
        assert_eq!(err, Err(QuoteError::DuplicateDate("2020-01-02".into())));
    }

    #[test]
    fn fractional_volume_is_floored() {
        let s = to_bar_series(
            &adjusted(&["2020-01-02,1,1,1,1,1,1000.9"]),
            &ticker(),
            SeriesOptions::default(),
        )
        .unwrap();
        assert_eq!(s.bars[0].volume, 1000);
    }

    #[test]
    fn ohlc_violation_kept_unless_strict() {
        let t = adjusted(&["2020-01-02,10,12,10.5,11,11,1000"]);
        let lenient = to_bar_series(
            &t,
            &ticker(),
            SeriesOptions {
                rounding: Some(2),
                strict: false,
            },
        )
        .unwrap();
        assert_eq!(
            (lenient.len(), lenient.ohlc_violations, lenient.dropped_rows),
            (1, 1, 0)
        );
        let strict = to_bar_series(
            &t,
            &ticker(),
            SeriesOptions {
                rounding: Some(2),
                strict: true,
            },
        )
        .unwrap();
        assert_eq!((strict.len(), strict.ohlc_violations, strict.dropped_rows), (0, 1, 1));
    }

    #[test]
    fn intraday_timestamps() {
        assert_eq!(
            BarTime::parse("2021-06-29 09:30:00-04:00"),
            Some(BarTime::Instant(1_624_973_400))
        );
        assert_eq!(
            BarTime::parse("2021-06-29 13:30:00"),
            Some(BarTime::Instant(1_624_973_400))
        );
        assert_eq!(
            BarTime::parse("2021-06-29T13:30:00Z"),
            Some(BarTime::Instant(1_624_973_400))
        );
        assert_eq!(BarTime::Instant(1_624_973_400).to_string(), "2021-06-29 13:30:00");
        assert_eq!(BarTime::parse("2021-06-29 25:30:00"), None);
        assert_eq!(BarTime::parse("2021-06-29 13:30"), None);
        assert_eq!(BarTime::parse("06/29/2021"), None);
    }

    #[test]
    fn datetime_header_is_renamed() {
        let body = "Datetime,Open,High,Low,Close,Adj Close,Volume\n2021-06-29 09:30:00-04:00,1,1,1,1,1,0\n";
        let t = parse_quote_csv(body.as_bytes()).unwrap();
        assert_eq!(t.columns[0], "Date");
    }

    #[test]
    fn scientific_and_negative_tokens() {
        assert_eq!(parse_decimal("1.5e-3"), Some(dec("0.0015")));
        assert_eq!(parse_price("-1.0"), None);
        assert_eq!(parse_volume("-5"), None);
        assert_eq!(parse_decimal("NULL"), None);
    }
}
