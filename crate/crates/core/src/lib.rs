//! Build per-ticker historical OHLCV datasets for whole stock indices.
//!
//! The pipeline scrapes an index's constituent list (HTML table or CSV
//! registry), downloads each ticker's history from the quote provider's CSV
//! download endpoint, swaps in the adjusted close, rounds prices, and writes
//! one `TICKER.csv` per company plus a `_summary.json` run report.
//!
//! ```no_run
//! use std::sync::Arc;
//! use stockset::cli::parse_args;
//! use stockset::run::{run, RunEnv};
//!
//! let cfg = parse_args(
//!     ["stockset", "--index", "sp500", "--start", "2018-01-01", "--end", "2022-12-31"],
//!     None,
//! )
//! .unwrap();
//! let env = RunEnv::from_config(&cfg);
//! let report = run(&cfg, &env, &mut std::io::stdout()).unwrap();
//! println!("exit code {}", report.exit_code);
//! ```

pub mod cli;
pub mod client;
pub mod constituents;
pub mod registry;
pub mod run;
pub mod sink;
pub mod timeframe;

pub use client::{build_download_url, Bar, BarSeries, QuoteClient, QuoteRequest};
pub use constituents::{load_constituents, ConstituentList, IndexSource, Ticker};
pub use sink::{FetchSummary, TickerOutcome};
pub use timeframe::{make_range, CivilDate, DateRange, Interval};

/// Current wall-clock time as Unix seconds.
pub fn now_epoch_seconds() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}
