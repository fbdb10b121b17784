//! Quote provider client: download URLs, paced and retried fetches, and
//! CSV-to-bar conversion.

pub mod limiter;
pub mod quote;
pub mod transport;

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::constituents::Ticker;
use crate::timeframe::{DateRange, Interval};

pub use limiter::{Clock, ManualClock, RateLimiter, RetryPolicy, SystemClock};
pub use quote::{
    parse_quote_csv, round_price, substitute_adjusted_close, to_bar_series, Bar, BarSeries, BarTime, QuoteError,
    RawTable, SeriesOptions,
};
pub use transport::{HttpRequest, HttpResponse, Transport, TransportError};

pub const DEFAULT_BASE_URL: &str = "https://query1.finance.yahoo.com";
pub const DEFAULT_USER_AGENT: &str = concat!("stockset/", env!("CARGO_PKG_VERSION"));

/// Longest `Retry-After` wait that will be honored.
const MAX_RETRY_AFTER: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuoteRequest {
    pub ticker: Ticker,
    pub range: DateRange,
    pub interval: Interval,
}

/// Characters left alone in the ticker path segment (RFC 3986 unreserved).
fn encode_path_segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || matches!(b, b'-' | b'.' | b'_' | b'~') {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

/// The historical-download URL. Parameter order is fixed because fixture
/// files are keyed by the exact URL string.
pub fn build_download_url(base: &str, req: &QuoteRequest) -> String {
    format!(
        "{}/v7/finance/download/{}?period1={}&period2={}&interval={}&events=history&includeAdjustedClose=true",
        base.trim_end_matches('/'),
        encode_path_segment(req.ticker.as_str()),
        req.range.period1(),
        req.range.period2(),
        req.interval.as_str(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fetched {
    Body(Vec<u8>),
    /// Nothing listed for the ticker in the requested window.
    EmptyHistory,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchReport {
    pub fetched: Fetched,
    pub attempts: u32,
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("{url}: HTTP {status} is not retryable")]
    Permanent { url: String, status: u16 },
    #[error("{url}: gave up after {attempts} attempt(s), last error: {last}")]
    RetriesExhausted { url: String, attempts: u32, last: String },
    #[error("no recorded fixture for {url}")]
    FixtureMiss { url: String },
    #[error("{url}: {source}")]
    Fixture {
        url: String,
        #[source]
        source: TransportError,
    },
}

/// True for bodies the provider sends instead of CSV when a symbol has no data.
fn is_no_data_body(body: &[u8]) -> bool {
    let head = &body[..body.len().min(4096)];
    let text = String::from_utf8_lossy(head).to_ascii_lowercase();
    text.contains("no data found") || text.contains("data doesn't exist")
}

fn retry_after(resp: &HttpResponse) -> Option<Duration> {
    let secs: u64 = resp.header("retry-after")?.trim().parse().ok()?;
    Some(Duration::from_secs(secs).min(MAX_RETRY_AFTER))
}

pub struct QuoteClient {
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    limiter: Arc<RateLimiter>,
    policy: RetryPolicy,
    base_url: String,
    user_agent: String,
}

impl QuoteClient {
    pub fn new(transport: Arc<dyn Transport>, clock: Arc<dyn Clock>, limiter: Arc<RateLimiter>) -> Self {
        QuoteClient {
            transport,
            clock,
            limiter,
            policy: RetryPolicy::default(),
            base_url: DEFAULT_BASE_URL.to_string(),
            user_agent: DEFAULT_USER_AGENT.to_string(),
        }
    }

    pub fn with_policy(mut self, policy: RetryPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_base_url(mut self, base: impl Into<String>) -> Self {
        self.base_url = base.into();
        self
    }

    pub fn with_user_agent(mut self, ua: impl Into<String>) -> Self {
        self.user_agent = ua.into();
        self
    }

    pub fn url_for(&self, req: &QuoteRequest) -> String {
        build_download_url(&self.base_url, req)
    }

    /// Downloads one ticker's CSV.
    ///
    /// 200 returns the body, 404 and "no data" bodies are `EmptyHistory`.
    /// 429, 5xx and network errors are retried with exponential backoff
    /// (or the server's `Retry-After`); any other status fails at once.
    pub fn fetch(&self, req: &QuoteRequest) -> Result<FetchReport, FetchError> {
        let url = self.url_for(req);
        let host = limiter::host_of(&url);
        let http = HttpRequest::get(url.clone()).header("User-Agent", self.user_agent.clone());
        let max = self.policy.max_attempts.max(1);
        let mut attempts = 0;

        loop {
            attempts += 1;
            self.limiter.acquire(&host, self.clock.as_ref());
            let (last, hint) = match self.transport.execute(&http) {
                Ok(resp) => match resp.status {
                    200 if is_no_data_body(&resp.body) => {
                        return Ok(FetchReport {
                            fetched: Fetched::EmptyHistory,
                            attempts,
                        })
                    }
                    200 => {
                        return Ok(FetchReport {
                            fetched: Fetched::Body(resp.body),
                            attempts,
                        })
                    }
                    404 => {
                        return Ok(FetchReport {
                            fetched: Fetched::EmptyHistory,
                            attempts,
                        })
                    }
                    429 | 500..=599 => (format!("HTTP {}", resp.status), retry_after(&resp)),
                    status => return Err(FetchError::Permanent { url, status }),
                },
                Err(TransportError::FixtureMiss { url }) => return Err(FetchError::FixtureMiss { url }),
                Err(e @ TransportError::CorruptFixture { .. }) => return Err(FetchError::Fixture { url, source: e }),
                Err(e) => (e.to_string(), None),
            };
            if attempts >= max {
                return Err(FetchError::RetriesExhausted { url, attempts, last });
            }
            let wait = hint.unwrap_or_else(|| self.policy.backoff(attempts));
            log::debug!("{url}: {last}, retrying in {wait:?}");
            self.clock.sleep(wait);
        }
    }
}
