//! Index constituent lists: scraped HTML tables, remote CSV registries,
//! local ticker files and inline lists.

mod html;
mod symbol;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::client::transport::{HttpRequest, Transport, TransportError};

pub use html::{extract_tables, select_symbol_column, Table};
pub use symbol::{is_valid_ticker, normalize_symbol, RawSymbol, SymbolNormalizer, Ticker};

#[derive(Debug, Error)]
pub enum ConstituentError {
    #[error("malformed HTML: {0}")]
    MalformedHtml(String),
    #[error("column {column:?} not found ({context})")]
    ColumnNotFound { column: String, context: String },
    #[error("invalid symbol {0:?}")]
    InvalidSymbol(String),
    #[error("override {0:?} -> {1:?} chains into another override")]
    OverrideChain(String, String),
    #[error("CSV parse error: {0}")]
    CsvParse(String),
    #[error("fetching {url}: {source}")]
    Transport {
        url: String,
        #[source]
        source: TransportError,
    },
    #[error("fetching {url}: HTTP {status}")]
    HttpStatus { url: String, status: u16 },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid index source: {0}")]
    InvalidSource(String),
    #[error("no valid tickers in {0}")]
    EmptyConstituentList(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    HtmlTable,
    RemoteCsv,
    LocalFile,
    InlineList,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::HtmlTable => "html_table",
            SourceKind::RemoteCsv => "remote_csv",
            SourceKind::LocalFile => "local_file",
            SourceKind::InlineList => "inline_list",
        })
    }
}

/// Where a constituent list comes from. For `InlineList` the locator holds
/// the comma separated symbols themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSource {
    pub kind: SourceKind,
    pub locator: String,
    pub column: String,
    pub table_hint: Option<usize>,
}

impl IndexSource {
    pub fn html_table(url: impl Into<String>, column: impl Into<String>, table_hint: Option<usize>) -> Self {
        IndexSource {
            kind: SourceKind::HtmlTable,
            locator: url.into(),
            column: column.into(),
            table_hint,
        }
    }

    pub fn remote_csv(url: impl Into<String>, column: impl Into<String>) -> Self {
        IndexSource {
            kind: SourceKind::RemoteCsv,
            locator: url.into(),
            column: column.into(),
            table_hint: None,
        }
    }

    pub fn local_file(path: impl Into<String>) -> Self {
        IndexSource {
            kind: SourceKind::LocalFile,
            locator: path.into(),
            column: String::new(),
            table_hint: None,
        }
    }

    pub fn inline(symbols: impl Into<String>) -> Self {
        IndexSource {
            kind: SourceKind::InlineList,
            locator: symbols.into(),
            column: String::new(),
            table_hint: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConstituentError> {
        match self.kind {
            SourceKind::HtmlTable | SourceKind::RemoteCsv if self.column.trim().is_empty() => Err(
                ConstituentError::InvalidSource(format!("{} source needs a column name", self.kind)),
            ),
            SourceKind::HtmlTable | SourceKind::RemoteCsv | SourceKind::LocalFile if self.locator.trim().is_empty() => {
                Err(ConstituentError::InvalidSource(format!(
                    "{} source needs a locator",
                    self.kind
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstituentList {
    pub index_name: String,
    pub tickers: Vec<Ticker>,
    /// Seconds since the Unix epoch, UTC.
    pub retrieved_at: i64,
    pub source: IndexSource,
}

/// Result of reading a symbol column out of a CSV registry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CsvSymbols {
    pub symbols: Vec<RawSymbol>,
    /// Rows dropped because their field count did not match the header.
    pub skipped_rows: usize,
}

/// Reads `column` out of a CSV document with a header row. Rows with the
/// wrong number of fields are skipped and counted, or rejected when
/// `strict` is set.
pub fn parse_symbol_csv(body: &[u8], column: &str, strict: bool) -> Result<CsvSymbols, ConstituentError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(body);
    let headers = reader
        .headers()
        .map_err(|e| ConstituentError::CsvParse(e.to_string()))?
        .clone();
    let idx = headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| ConstituentError::ColumnNotFound {
            column: column.to_string(),
            context: format!("CSV header {:?}", headers.iter().collect::<Vec<_>>()),
        })?;

    let mut out = CsvSymbols::default();
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ConstituentError::CsvParse(e.to_string()))?;
        if record.len() != headers.len() {
            if strict {
                return Err(ConstituentError::CsvParse(format!(
                    "row {} has {} fields, header has {}",
                    n + 2,
                    record.len(),
                    headers.len()
                )));
            }
            out.skipped_rows += 1;
            continue;
        }
        if let Some(sym) = record.get(idx).and_then(RawSymbol::new) {
            out.symbols.push(sym);
        }
    }
    Ok(out)
}

pub(crate) fn fetch_document(
    transport: &dyn Transport,
    url: &str,
    user_agent: &str,
) -> Result<Vec<u8>, ConstituentError> {
    let req = HttpRequest::get(url).header("User-Agent", user_agent);
    let resp = transport.execute(&req).map_err(|source| ConstituentError::Transport {
        url: url.to_string(),
        source,
    })?;
    if resp.status != 200 {
        return Err(ConstituentError::HttpStatus {
            url: url.to_string(),
            status: resp.status,
        });
    }
    Ok(resp.body)
}

pub fn fetch_remote_csv(
    transport: &dyn Transport,
    url: &str,
    column: &str,
    user_agent: &str,
    strict: bool,
) -> Result<CsvSymbols, ConstituentError> {
    let body = fetch_document(transport, url, user_agent)?;
    parse_symbol_csv(&body, column, strict)
}

/// One symbol per line; `#` starts a comment; blank lines are ignored.
pub fn parse_ticker_file(text: &str) -> Vec<RawSymbol> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or(""))
        .filter_map(RawSymbol::new)
        .collect()
}

pub fn parse_inline_list(text: &str) -> Vec<RawSymbol> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter_map(RawSymbol::new)
        .collect()
}

/// Knobs for [`load_constituents`] besides the source itself.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub index_name: String,
    pub normalizer: SymbolNormalizer,
    pub user_agent: String,
    pub strict: bool,
}

/// Fetches, normalizes and de-duplicates the symbols of one index.
///
/// Symbols that cannot be normalized are logged and skipped. An empty
/// result is an error.
pub fn load_constituents(
    source: &IndexSource,
    transport: &dyn Transport,
    opts: &LoadOptions,
) -> Result<ConstituentList, ConstituentError> {
    source.validate()?;
    let raw = match source.kind {
        SourceKind::HtmlTable => {
            let body = fetch_document(transport, &source.locator, &opts.user_agent)?;
            let tables = extract_tables(&body)?;
            select_symbol_column(&tables, &source.column, source.table_hint)?
        }
        SourceKind::RemoteCsv => {
            let parsed = fetch_remote_csv(
                transport,
                &source.locator,
                &source.column,
                &opts.user_agent,
                opts.strict,
            )?;
            if parsed.skipped_rows > 0 {
                log::warn!(
                    "{}: skipped {} malformed CSV row(s)",
                    source.locator,
                    parsed.skipped_rows
                );
            }
            parsed.symbols
        }
        SourceKind::LocalFile => {
            let text =
                std::fs::read_to_string(Path::new(&source.locator)).map_err(|source_err| ConstituentError::Io {
                    path: source.locator.clone(),
                    source: source_err,
                })?;
            parse_ticker_file(&text)
        }
        SourceKind::InlineList => parse_inline_list(&source.locator),
    };

    let tickers = normalize_unique(&raw, &opts.normalizer);
    if tickers.is_empty() {
        return Err(ConstituentError::EmptyConstituentList(opts.index_name.clone()));
    }
    Ok(ConstituentList {
        index_name: opts.index_name.clone(),
        tickers,
        retrieved_at: crate::now_epoch_seconds(),
        source: source.clone(),
    })
}

/// Normalizes in order, keeping the first occurrence of each ticker.
pub fn normalize_unique(raw: &[RawSymbol], normalizer: &SymbolNormalizer) -> Vec<Ticker> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.len());
    for sym in raw {
        match normalizer.normalize(sym) {
            Ok(t) => {
                if seen.insert(t.clone()) {
                    out.push(t);
                }
            }
            Err(e) => log::warn!("skipping symbol: {e}"),
        }
    }
    out
}
