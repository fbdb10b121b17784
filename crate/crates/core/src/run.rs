//! The collection pipeline: constituents, then a bounded pool of fetch
//! workers, then the dataset sink.

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use thiserror::Error;

use crate::cli::{RunConfig, TransportMode, Universe};
use crate::client::quote::{parse_quote_csv, substitute_adjusted_close, to_bar_series, SeriesOptions};
use crate::client::transport::{LiveTransport, RecordTransport, ReplayTransport, Transport};
use crate::client::{
    Clock, FetchError, Fetched, QuoteClient, QuoteRequest, RateLimiter, RetryPolicy, SystemClock, DEFAULT_USER_AGENT,
};
use crate::constituents::{
    load_constituents, ConstituentError, ConstituentList, IndexSource, LoadOptions, SymbolNormalizer, Ticker,
};
use crate::registry::{Registry, RegistryError};
use crate::sink::{
    prepare_directory, write_summary, write_ticker_csv, Clobber, FetchSummary, RunMetadata, SinkConfig, SinkError,
    TickerOutcome,
};
use crate::timeframe::format_rfc3339;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

pub const SKIP_MESSAGE: &str = "didn't exist in this entire time period";

/// Setup failures; the run stops before or without fetching anything.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("loading constituents: {0}")]
    Constituents(#[from] ConstituentError),
    #[error(transparent)]
    Sink(#[from] SinkError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Everything a run needs from the outside world.
pub struct RunEnv {
    pub transport: Arc<dyn Transport>,
    pub clock: Arc<dyn Clock>,
    pub retry: RetryPolicy,
    /// Set to stop handing out new tickers; in-flight ones finish.
    pub cancel: Arc<AtomicBool>,
}

impl RunEnv {
    pub fn new(transport: Arc<dyn Transport>, clock: Arc<dyn Clock>) -> Self {
        RunEnv {
            transport,
            clock,
            retry: RetryPolicy::default(),
            cancel: Arc::new(AtomicBool::new(false)),
        }
    }

    /// Real clock and the transport selected by `--transport`.
    pub fn from_config(cfg: &RunConfig) -> Self {
        let transport: Arc<dyn Transport> = match &cfg.transport {
            TransportMode::Live => Arc::new(LiveTransport::default()),
            TransportMode::Replay(dir) => Arc::new(ReplayTransport::new(dir)),
            TransportMode::Record(dir) => Arc::new(RecordTransport::new(LiveTransport::default(), dir)),
        };
        Self::new(transport, Arc::new(SystemClock::default()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub summary: FetchSummary,
    pub out_dir: PathBuf,
    pub constituents: Vec<Ticker>,
    pub exit_code: i32,
}

/// One finished ticker as seen by the progress reporter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgressEvent {
    pub done: usize,
    pub total: usize,
    pub ticker: Ticker,
    pub outcome: TickerOutcome,
}

pub fn progress_line(ev: &ProgressEvent) -> String {
    let prefix = format!("[{}/{}]", ev.done, ev.total);
    match &ev.outcome {
        TickerOutcome::Collected { rows } => format!("{prefix} {}: collected {rows} rows", ev.ticker),
        TickerOutcome::Ignored => format!("{prefix} The company {} {SKIP_MESSAGE}", ev.ticker),
        TickerOutcome::Failed { reason } => format!("{prefix} {}: failed: {reason}", ev.ticker),
    }
}

pub fn summary_line(s: &FetchSummary) -> String {
    format!(
        "Total no. of companies collected: {} of {} ({} ignored, {} failed)",
        s.collected(),
        s.requested(),
        s.ignored_empty(),
        s.failed()
    )
}

/// Writes per-ticker lines (unless quiet) and the final summary line.
pub struct ProgressReporter<'a> {
    out: &'a mut dyn Write,
    quiet: bool,
}

impl<'a> ProgressReporter<'a> {
    pub fn new(out: &'a mut dyn Write, quiet: bool) -> Self {
        ProgressReporter { out, quiet }
    }

    pub fn note(&mut self, line: &str) {
        if !self.quiet {
            let _ = writeln!(self.out, "{line}");
        }
    }

    pub fn event(&mut self, ev: &ProgressEvent) {
        self.note(&progress_line(ev));
    }

    pub fn finish(&mut self, summary: &FetchSummary) {
        let _ = writeln!(self.out, "{}", summary_line(summary));
        let _ = self.out.flush();
    }
}

struct Resolved {
    index_name: String,
    source: IndexSource,
    normalizer: SymbolNormalizer,
    default_out: Option<String>,
}

fn resolve_universe(cfg: &RunConfig, registry: &Registry) -> Result<Resolved, RunError> {
    let plain = |name: &str, source: IndexSource| Resolved {
        index_name: name.to_string(),
        source,
        normalizer: SymbolNormalizer::default(),
        default_out: None,
    };
    Ok(match &cfg.universe {
        Universe::Index(name) => {
            let (key, entry) = registry.get(name)?;
            Resolved {
                index_name: key.to_string(),
                source: entry.source(),
                normalizer: entry.normalizer()?,
                default_out: entry.default_out.clone(),
            }
        }
        Universe::Symbols(list) => plain("symbols", IndexSource::inline(list.clone())),
        Universe::SymbolsFile(path) => plain("symbols-file", IndexSource::local_file(path.to_string_lossy())),
        Universe::SourceUrl { url, column } => {
            let path = url.split(['?', '#']).next().unwrap_or("");
            let source = if path.to_ascii_lowercase().ends_with(".csv") {
                IndexSource::remote_csv(url.clone(), column.clone())
            } else {
                IndexSource::html_table(url.clone(), column.clone(), None)
            };
            plain("custom", source)
        }
    })
}

/// Fetches, converts and writes one ticker. Returns the outcome and the
/// number of rows dropped along the way.
fn collect_one(
    client: &QuoteClient,
    cfg: &RunConfig,
    out_dir: &std::path::Path,
    ticker: &Ticker,
) -> (TickerOutcome, usize) {
    let failed = |reason: String| (TickerOutcome::Failed { reason }, 0);
    let req = QuoteRequest {
        ticker: ticker.clone(),
        range: cfg.range,
        interval: cfg.interval,
    };
    let body = match client.fetch(&req) {
        Ok(r) => match r.fetched {
            Fetched::Body(b) => b,
            Fetched::EmptyHistory => return (TickerOutcome::Ignored, 0),
        },
        Err(e @ FetchError::Permanent { .. })
        | Err(e @ FetchError::RetriesExhausted { .. })
        | Err(e @ FetchError::FixtureMiss { .. })
        | Err(e @ FetchError::Fixture { .. }) => return failed(e.to_string()),
    };
    let raw = match parse_quote_csv(&body) {
        Ok(t) => t,
        Err(e) => return failed(e.to_string()),
    };
    if raw.rows.is_empty() {
        return (TickerOutcome::Ignored, raw.malformed_rows);
    }
    let opts = SeriesOptions {
        rounding: cfg.rounding,
        strict: cfg.strict,
    };
    let series = match substitute_adjusted_close(&raw).and_then(|t| to_bar_series(&t, ticker, opts)) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    if series.is_empty() {
        return (TickerOutcome::Ignored, series.dropped_rows);
    }
    match write_ticker_csv(&series, out_dir, cfg.rounding) {
        Ok(_) => (TickerOutcome::Collected { rows: series.len() }, series.dropped_rows),
        Err(e) => (TickerOutcome::Failed { reason: e.to_string() }, series.dropped_rows),
    }
}

pub fn load_registry(cfg: &RunConfig) -> Result<Registry, RunError> {
    Ok(match &cfg.registry {
        Some(path) => Registry::builtin_with_file(path)?,
        None => Registry::builtin(),
    })
}

/// Runs the whole pipeline. Setup problems (registry, constituents, output
/// directory) are returned as errors and leave the output directory alone;
/// per-ticker problems are recorded in the summary.
pub fn run(cfg: &RunConfig, env: &RunEnv, progress: &mut dyn Write) -> Result<RunReport, RunError> {
    if cfg.concurrency < 1 {
        return Err(RunError::Config("concurrency must be at least 1".into()));
    }
    if !(cfg.rate_limit.is_finite() && cfg.rate_limit > 0.0) {
        return Err(RunError::Config("rate limit must be positive".into()));
    }
    env.retry.validate().map_err(RunError::Config)?;

    let mut reporter = ProgressReporter::new(progress, cfg.quiet);
    let registry = load_registry(cfg)?;
    let resolved = resolve_universe(cfg, &registry)?;
    let user_agent = cfg.user_agent.clone().unwrap_or_else(|| DEFAULT_USER_AGENT.to_string());

    let list: ConstituentList = load_constituents(
        &resolved.source,
        env.transport.as_ref(),
        &LoadOptions {
            index_name: resolved.index_name.clone(),
            normalizer: resolved.normalizer.clone(),
            user_agent: user_agent.clone(),
            strict: cfg.strict,
        },
    )?;
    reporter.note(&format!("{}: {} tickers", list.index_name, list.tickers.len()));

    let out_dir = cfg
        .out_dir
        .clone()
        .or_else(|| resolved.default_out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data_stocks"));
    let out_dir = prepare_directory(&SinkConfig {
        directory: out_dir,
        clobber: if cfg.overwrite {
            Clobber::Recreate
        } else {
            Clobber::Refuse
        },
        rounding_places: cfg.rounding,
    })?;

    let client = QuoteClient::new(
        env.transport.clone(),
        env.clock.clone(),
        Arc::new(RateLimiter::new(cfg.rate_limit)),
    )
    .with_policy(env.retry.clone())
    .with_base_url(registry.base_url.clone())
    .with_user_agent(user_agent);

    let tickers = &list.tickers;
    let total = tickers.len();
    let mut summary = FetchSummary::new();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, TickerOutcome, usize)>();

    std::thread::scope(|scope| {
        for _ in 0..cfg.concurrency.min(total.max(1)) {
            let tx = tx.clone();
            let (client, next, out_dir, cancel) = (&client, &next, &out_dir, &env.cancel);
            scope.spawn(move || loop {
                if cancel.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(ticker) = tickers.get(i) else { break };
                let (outcome, dropped) = collect_one(client, cfg, out_dir, ticker);
                if tx.send((i, outcome, dropped)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (done, (i, outcome, dropped)) in rx.iter().enumerate() {
            let ticker = tickers[i].clone();
            reporter.event(&ProgressEvent {
                done: done + 1,
                total,
                ticker: ticker.clone(),
                outcome: outcome.clone(),
            });
            summary.record(ticker, outcome, dropped);
        }
    });

    for t in tickers {
        if summary.outcome(t).is_none() {
            summary.record(
                t.clone(),
                TickerOutcome::Failed {
                    reason: "cancelled".into(),
                },
                0,
            );
        }
    }

    let meta = RunMetadata {
        index: list.index_name.clone(),
        start: cfg.start().to_string(),
        end: cfg.end().to_string(),
        interval: cfg.interval.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        generated_at: format_rfc3339(crate::now_epoch_seconds()),
    };
    write_summary(&summary, &meta, &out_dir)?;
    reporter.finish(&summary);

    let exit_code = if summary.failed() == 0 { EXIT_OK } else { EXIT_PARTIAL };
    Ok(RunReport {
        summary,
        out_dir,
        constituents: list.tickers,
        exit_code,
    })
}
