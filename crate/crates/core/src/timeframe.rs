//! Bar intervals, civil dates, and the epoch-second window sent to the
//! quote endpoint.
//!
//! All conversions are done in UTC on the proleptic Gregorian calendar with
//! POSIX seconds (no leap seconds).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeframeError {
    #[error("unknown interval {0:?} (expected one of {tokens})", tokens = Interval::TOKENS.join(", "))]
    UnknownInterval(String),
    #[error("bad date format {0:?} (expected yyyy-mm-dd)")]
    BadDateFormat(String),
    #[error("invalid calendar date {0:?}")]
    InvalidCalendarDate(String),
    #[error("empty date range: start {start} is after end {end}")]
    EmptyRange { start: CivilDate, end: CivilDate },
}

/// Bar spacing accepted by the download endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Interval {
    Min1,
    Min2,
    Min5,
    Min15,
    Min30,
    Min60,
    Min90,
    Hour1,
    #[default]
    Day1,
    Day5,
    Week1,
    Month1,
    Month3,
}

impl Interval {
    pub const ALL: [Interval; 13] = [
        Interval::Min1,
        Interval::Min2,
        Interval::Min5,
        Interval::Min15,
        Interval::Min30,
        Interval::Min60,
        Interval::Min90,
        Interval::Hour1,
        Interval::Day1,
        Interval::Day5,
        Interval::Week1,
        Interval::Month1,
        Interval::Month3,
    ];

    pub const TOKENS: [&'static str; 13] = [
        "1m", "2m", "5m", "15m", "30m", "60m", "90m", "1h", "1d", "5d", "1wk", "1mo", "3mo",
    ];

    pub fn as_str(self) -> &'static str {
        Self::TOKENS[self as usize]
    }

    /// True for bar sizes below one day; those rows carry a time of day.
    pub fn is_intraday(self) -> bool {
        (self as usize) < (Interval::Day1 as usize)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Interval {
    type Err = TimeframeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_interval(s)
    }
}

/// Exact token match, no aliases and no case folding.
pub fn parse_interval(text: &str) -> Result<Interval, TimeframeError> {
    Interval::TOKENS
        .iter()
        .position(|t| *t == text)
        .map(|i| Interval::ALL[i])
        .ok_or_else(|| TimeframeError::UnknownInterval(text.to_string()))
}

/// A calendar day, `yyyy-mm-dd`, years 0000 through 9999.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CivilDate {
    year: i32,
    month: u8,
    day: u8,
}

pub fn is_leap_year(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap_year(year) => 29,
        2 => 28,
        _ => 0,
    }
}

impl CivilDate {
    pub fn new(year: i32, month: u8, day: u8) -> Option<Self> {
        if !(0..=9999).contains(&year) || !(1..=12).contains(&month) {
            return None;
        }
        if day == 0 || day > days_in_month(year, month) {
            return None;
        }
        Some(CivilDate { year, month, day })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u8 {
        self.month
    }

    pub fn day(self) -> u8 {
        self.day
    }

    /// Days since 1970-01-01 (negative before the epoch).
    pub fn days_since_epoch(self) -> i64 {
        // Shift the year to start in March so the leap day is the last day
        // of the shifted year; eras are 400-year cycles of 146097 days.
        let y = i64::from(self.year) - i64::from(self.month <= 2);
        let era = y.div_euclid(400);
        let yoe = y - era * 400;
        let m = i64::from(self.month);
        let mp = (m + 9) % 12;
        let doy = (153 * mp + 2) / 5 + i64::from(self.day) - 1;
        let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        era * 146_097 + doe - 719_468
    }

    /// Inverse of [`CivilDate::days_since_epoch`]. Returns `None` outside
    /// the four-digit year range.
    pub fn from_days_since_epoch(days: i64) -> Option<Self> {
        let z = days + 719_468;
        let era = z.div_euclid(146_097);
        let doe = z - era * 146_097;
        let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
        let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        let mp = (5 * doy + 2) / 153;
        let day = doy - (153 * mp + 2) / 5 + 1;
        let month = if mp < 10 { mp + 3 } else { mp - 9 };
        let year = yoe + era * 400 + i64::from(month <= 2);
        let year = i32::try_from(year).ok()?;
        CivilDate::new(year, month as u8, day as u8)
    }

    pub fn succ(self) -> Option<Self> {
        Self::from_days_since_epoch(self.days_since_epoch() + 1)
    }
}

impl fmt::Display for CivilDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

impl FromStr for CivilDate {
    type Err = TimeframeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_civil_date(s)
    }
}

fn ascii_number(digits: &[u8]) -> Option<u32> {
    if digits.is_empty() || !digits.iter().all(u8::is_ascii_digit) {
        return None;
    }
    Some(digits.iter().fold(0, |acc, d| acc * 10 + u32::from(d - b'0')))
}

/// Strict `yyyy-mm-dd`: ten characters, zero padded, calendar-checked.
pub fn parse_civil_date(text: &str) -> Result<CivilDate, TimeframeError> {
    let bad = || TimeframeError::BadDateFormat(text.to_string());
    let b = text.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return Err(bad());
    }
    let year = ascii_number(&b[0..4]).ok_or_else(bad)?;
    let month = ascii_number(&b[5..7]).ok_or_else(bad)?;
    let day = ascii_number(&b[8..10]).ok_or_else(bad)?;
    CivilDate::new(year as i32, month as u8, day as u8)
        .ok_or_else(|| TimeframeError::InvalidCalendarDate(text.to_string()))
}

/// Seconds since 1970-01-01T00:00:00Z for the given UTC wall-clock time.
///
/// # Panics
///
/// If `hh`, `mm` or `ss` are out of range.
pub fn to_epoch_seconds(date: CivilDate, hh: u32, mm: u32, ss: u32) -> i64 {
    assert!(
        hh < 24 && mm < 60 && ss < 60,
        "time of day out of range: {hh}:{mm}:{ss}"
    );
    date.days_since_epoch() * SECONDS_PER_DAY + i64::from(hh * 3600 + mm * 60 + ss)
}

/// Splits epoch seconds into a civil date and seconds into that day.
pub fn from_epoch_seconds(secs: i64) -> Option<(CivilDate, u32)> {
    let days = secs.div_euclid(SECONDS_PER_DAY);
    let rem = secs.rem_euclid(SECONDS_PER_DAY) as u32;
    CivilDate::from_days_since_epoch(days).map(|d| (d, rem))
}

/// Formats epoch seconds as `yyyy-mm-dd HH:MM:SS` (UTC).
pub fn format_timestamp(secs: i64) -> String {
    match from_epoch_seconds(secs) {
        Some((date, rem)) => format!("{date} {:02}:{:02}:{:02}", rem / 3600, rem / 60 % 60, rem % 60),
        None => secs.to_string(),
    }
}

/// Formats epoch seconds as RFC 3339 with a `Z` suffix.
pub fn format_rfc3339(secs: i64) -> String {
    format_timestamp(secs).replacen(' ', "T", 1) + "Z"
}

/// Query window: start of the first day through 23:59:00 of the last day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DateRange {
    start: CivilDate,
    end: CivilDate,
    period1: i64,
    period2: i64,
}

impl DateRange {
    pub fn start(&self) -> CivilDate {
        self.start
    }

    pub fn end(&self) -> CivilDate {
        self.end
    }

    pub fn period1(&self) -> i64 {
        self.period1
    }

    pub fn period2(&self) -> i64 {
        self.period2
    }
}

pub fn make_range(start: CivilDate, end: CivilDate) -> Result<DateRange, TimeframeError> {
    if start > end {
        return Err(TimeframeError::EmptyRange { start, end });
    }
    Ok(DateRange {
        start,
        end,
        period1: to_epoch_seconds(start, 0, 0, 0),
        period2: to_epoch_seconds(end, 23, 59, 0),
    })
}
