//! Command-line parsing into a validated [`RunConfig`].

use std::path::PathBuf;

use clap::{ArgGroup, Parser};
use thiserror::Error;

use crate::timeframe::{make_range, CivilDate, DateRange, Interval};

pub const USER_AGENT_ENV: &str = "STOCKSET_USER_AGENT";

#[derive(Debug, Error)]
pub enum UsageError {
    #[error("{0}")]
    Clap(#[from] clap::Error),
    #[error("{0}")]
    Invalid(String),
}

impl UsageError {
    /// `--help` and `--version` come through as "errors" that should exit 0.
    pub fn is_informational(&self) -> bool {
        matches!(self, UsageError::Clap(e) if matches!(
            e.kind(),
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
        ))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "stockset",
    version,
    about = "Download daily/weekly/monthly OHLCV history for every constituent of a stock index",
    group(ArgGroup::new("universe").required(true).args(["index", "symbols", "symbols_file", "source_url"]))
)]
struct Cli {
    /// Built-in index: sp500, nasdaq100 or nasdaq-all
    #[arg(long)]
    index: Option<String>,
    /// Comma separated ticker list
    #[arg(long)]
    symbols: Option<String>,
    /// File with one ticker per line (`#` comments allowed)
    #[arg(long, value_name = "PATH")]
    symbols_file: Option<PathBuf>,
    /// Custom constituent source: an HTML page with a table, or a CSV file URL
    #[arg(long, value_name = "URL")]
    source_url: Option<String>,
    /// Column holding the symbols for --source-url [default: Symbol]
    #[arg(long)]
    column: Option<String>,
    /// First day, yyyy-mm-dd
    #[arg(long)]
    start: String,
    /// Last day (inclusive), yyyy-mm-dd
    #[arg(long)]
    end: String,
    /// Bar size: 1m 2m 5m 15m 30m 60m 90m 1h 1d 5d 1wk 1mo 3mo
    #[arg(long, default_value = "1d")]
    interval: String,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Delete the output directory first if it exists
    #[arg(long)]
    overwrite: bool,
    /// Keep prices exactly as the provider sends them
    #[arg(long, conflicts_with = "round_places")]
    no_round: bool,
    /// Decimal places for half-even price rounding
    #[arg(long, value_name = "N")]
    round_places: Option<u32>,
    /// Tickers fetched in parallel
    #[arg(long, value_name = "N", default_value_t = 4)]
    concurrency: usize,
    /// Maximum requests per second per host
    #[arg(long, value_name = "R", default_value_t = 2.0)]
    rate_limit: f64,
    /// live, replay:PATH or record:PATH
    #[arg(long, default_value = "live")]
    transport: String,
    /// Reject inconsistent OHLC rows and malformed registry rows
    #[arg(long)]
    strict: bool,
    /// Only print the final summary line
    #[arg(long)]
    quiet: bool,
    /// TOML file adding to or replacing the built-in index definitions
    #[arg(long, value_name = "PATH")]
    registry: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Universe {
    Index(String),
    Symbols(String),
    SymbolsFile(PathBuf),
    SourceUrl { url: String, column: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportMode {
    Live,
    Replay(PathBuf),
    Record(PathBuf),
}

impl std::str::FromStr for TransportMode {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            UsageError::Invalid(format!(
                "--transport must be live, replay:PATH or record:PATH, got {s:?}"
            ))
        };
        match s.split_once(':') {
            None if s == "live" => Ok(TransportMode::Live),
            Some(("replay", p)) if !p.is_empty() => Ok(TransportMode::Replay(p.into())),
            Some(("record", p)) if !p.is_empty() => Ok(TransportMode::Record(p.into())),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub universe: Universe,
    pub range: DateRange,
    pub interval: Interval,
    /// `None` picks the index's default directory, or `data_stocks`.
    pub out_dir: Option<PathBuf>,
    pub overwrite: bool,
    pub rounding: Option<u32>,
    pub concurrency: usize,
    pub rate_limit: f64,
    pub transport: TransportMode,
    pub strict: bool,
    pub quiet: bool,
    pub registry: Option<PathBuf>,
    pub user_agent: Option<String>,
}

impl RunConfig {
    pub fn start(&self) -> CivilDate {
        self.range.start()
    }

    pub fn end(&self) -> CivilDate {
        self.range.end()
    }
}

/// Parses `argv` (program name first). The User-Agent override comes from
/// the environment and is passed in separately.
pub fn parse_args<I, T>(argv: I, user_agent: Option<String>) -> Result<RunConfig, UsageError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let invalid = |m: String| UsageError::Invalid(m);

    let start: CivilDate = cli.start.parse().map_err(|e| invalid(format!("--start: {e}")))?;
    let end: CivilDate = cli.end.parse().map_err(|e| invalid(format!("--end: {e}")))?;
    let range = make_range(start, end).map_err(|e| invalid(e.to_string()))?;
    let interval: Interval = cli.interval.parse().map_err(|e| invalid(format!("--interval: {e}")))?;

    if cli.concurrency < 1 {
        return Err(invalid("--concurrency must be at least 1".into()));
    }
    if !(cli.rate_limit.is_finite() && cli.rate_limit > 0.0) {
        return Err(invalid("--rate-limit must be a positive number".into()));
    }

    if cli.column.is_some() && cli.source_url.is_none() {
        return Err(invalid("--column only applies to --source-url".into()));
    }

    let universe = match (cli.index, cli.symbols, cli.symbols_file, cli.source_url) {
        (Some(i), None, None, None) => Universe::Index(i),
        (None, Some(s), None, None) => Universe::Symbols(s),
        (None, None, Some(f), None) => Universe::SymbolsFile(f),
        (None, None, None, Some(url)) => Universe::SourceUrl {
            url,
            column: cli.column.unwrap_or_else(|| "Symbol".to_string()),
        },
        _ => unreachable!("clap enforces exactly one universe flag"),
    };

    Ok(RunConfig {
        universe,
        range,
        interval,
        out_dir: cli.out,
        overwrite: cli.overwrite,
        rounding: if cli.no_round {
            None
        } else {
            Some(cli.round_places.unwrap_or(2))
        },
        concurrency: cli.concurrency,
        rate_limit: cli.rate_limit,
        transport: cli.transport.parse()?,
        strict: cli.strict,
        quiet: cli.quiet,
        registry: cli.registry,
        user_agent: user_agent.filter(|s| !s.trim().is_empty()),
    })
}
