//! HTTP transport abstraction with live, fixture-replay and fixture-record
//! implementations.
//!
//! A fixture directory holds one `<sha256(url)>.http` file per request:
//!
//! ```text
//! HTTP/1.1 200 OK
//! content-type: text/csv
//!
//! <body bytes, verbatim>
//! ```
//!
//! plus `manifest.txt`, one `<hash> <url>` line per fixture, sorted by URL.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::limiter::Clock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest {
            url: url.into(),
            headers: Vec::new(),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn header_value(&self, name: &str) -> Option<&str> {
        find_header(&self.headers, name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    /// Header names are stored lower-case.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn new(status: u16, body: impl Into<Vec<u8>>) -> Self {
        HttpResponse {
            status,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_ascii_lowercase(), value.into()));
        self
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        find_header(&self.headers, name)
    }
}

fn find_header<'a>(headers: &'a [(String, String)], name: &str) -> Option<&'a str> {
    headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| v.as_str())
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("network error: {0}")]
    Network(String),
    #[error("no recorded fixture for {url}")]
    FixtureMiss { url: String },
    #[error("corrupt fixture {path}: {reason}")]
    CorruptFixture { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Executes one HTTP GET. Implementations must be shareable across worker
/// threads.
pub trait Transport: Send + Sync {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (**self).execute(req)
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (**self).execute(req)
    }
}

const MAX_BODY_BYTES: u64 = 256 * 1024 * 1024;

/// Real network access over HTTPS.
pub struct LiveTransport {
    agent: ureq::Agent,
}

impl LiveTransport {
    pub fn new(timeout: Duration) -> Self {
        LiveTransport {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Default for LiveTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl Transport for LiveTransport {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut call = self.agent.get(&req.url);
        for (k, v) in &req.headers {
            call = call.set(k, v);
        }
        let resp = match call.call() {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(ureq::Error::Transport(t)) => return Err(TransportError::Network(t.to_string())),
        };
        let status = resp.status();
        let headers = resp
            .headers_names()
            .into_iter()
            .filter_map(|name| {
                let value = resp.header(&name)?.to_string();
                Some((name.to_ascii_lowercase(), value))
            })
            .collect();
        let mut body = Vec::new();
        resp.into_reader()
            .take(MAX_BODY_BYTES)
            .read_to_end(&mut body)
            .map_err(|e| TransportError::Network(e.to_string()))?;
        Ok(HttpResponse { status, headers, body })
    }
}

/// Headers worth keeping in a fixture; everything else varies per request.
const RECORDED_HEADERS: [&str; 2] = ["content-type", "retry-after"];

/// On-disk store of recorded responses keyed by URL hash.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(url: &str) -> String {
        let digest = Sha256::digest(url.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn path_for(&self, url: &str) -> PathBuf {
        self.dir.join(format!("{}.http", Self::key(url)))
    }

    pub fn load(&self, url: &str) -> Result<HttpResponse, TransportError> {
        let path = self.path_for(url);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(TransportError::FixtureMiss { url: url.to_string() })
            }
            Err(e) => return Err(e.into()),
        };
        decode_fixture(&bytes).map_err(|reason| TransportError::CorruptFixture {
            path: path.display().to_string(),
            reason,
        })
    }

    /// Writes the fixture file and refreshes the manifest.
    pub fn save(&self, url: &str, resp: &HttpResponse) -> Result<(), TransportError> {
        fs::create_dir_all(&self.dir)?;
        fs::write(self.path_for(url), encode_fixture(resp))?;
        self.add_to_manifest(url)
    }

    fn manifest_path(&self) -> PathBuf {
        self.dir.join("manifest.txt")
    }

    fn add_to_manifest(&self, url: &str) -> Result<(), TransportError> {
        let path = self.manifest_path();
        let mut entries: BTreeMap<String, String> = match fs::read_to_string(&path) {
            Ok(text) => text
                .lines()
                .filter_map(|l| l.split_once(' '))
                .map(|(h, u)| (u.to_string(), h.to_string()))
                .collect(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        entries.insert(url.to_string(), Self::key(url));
        let mut out = String::new();
        for (u, h) in &entries {
            out.push_str(&format!("{h} {u}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }
}

fn reason_phrase(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        403 => "Forbidden",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        504 => "Gateway Timeout",
        _ => "",
    }
}

pub fn encode_fixture(resp: &HttpResponse) -> Vec<u8> {
    let mut out = format!("HTTP/1.1 {} {}", resp.status, reason_phrase(resp.status))
        .trim_end()
        .to_string();
    out.push('\n');
    for (k, v) in &resp.headers {
        let k = k.to_ascii_lowercase();
        if RECORDED_HEADERS.contains(&k.as_str()) {
            out.push_str(&format!("{k}: {v}\n"));
        }
    }
    out.push('\n');
    let mut bytes = out.into_bytes();
    bytes.extend_from_slice(&resp.body);
    bytes
}

pub fn decode_fixture(bytes: &[u8]) -> Result<HttpResponse, String> {
    let mut rest = bytes;
    let next_line = |rest: &mut &[u8]| -> Option<String> {
        let pos = rest.iter().position(|&b| b == b'\n')?;
        let line = String::from_utf8_lossy(&rest[..pos]).trim_end_matches('\r').to_string();
        *rest = &rest[pos + 1..];
        Some(line)
    };
    let status_line = next_line(&mut rest).ok_or("missing status line")?;
    let status = status_line
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse::<u16>().ok())
        .ok_or_else(|| format!("bad status line {status_line:?}"))?;
    let mut headers = Vec::new();
    loop {
        let line = next_line(&mut rest).ok_or("missing blank line after headers")?;
        if line.is_empty() {
            break;
        }
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| format!("bad header line {line:?}"))?;
        headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    Ok(HttpResponse {
        status,
        headers,
        body: rest.to_vec(),
    })
}

/// Serves responses from a fixture directory; never touches the network.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    store: FixtureStore,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayTransport {
            store: FixtureStore::new(dir),
        }
    }
}

impl Transport for ReplayTransport {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.store.load(&req.url)
    }
}

/// Forwards to an inner transport and saves every response it gets.
pub struct RecordTransport<T> {
    inner: T,
    store: FixtureStore,
    lock: Mutex<()>,
}

impl<T: Transport> RecordTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> Self {
        RecordTransport {
            inner,
            store: FixtureStore::new(dir),
            lock: Mutex::new(()),
        }
    }
}

impl<T: Transport> Transport for RecordTransport<T> {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let resp = self.inner.execute(req)?;
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        self.store.save(&req.url, &resp)?;
        Ok(resp)
    }
}

type Scripted = Result<HttpResponse, TransportError>;

/// Plays back a fixed sequence of outcomes, one per execution, and keeps
/// every request it saw. With a clock attached it also notes when each
/// execution happened.
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Scripted>>,
    seen: Mutex<Vec<(HttpRequest, Duration)>>,
    clock: Option<Arc<dyn Clock>>,
}

impl ScriptedTransport {
    pub fn new(script: Vec<Scripted>) -> Self {
        ScriptedTransport {
            script: Mutex::new(script.into()),
            seen: Mutex::new(Vec::new()),
            clock: None,
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn ok(body: &str) -> Scripted {
        Ok(HttpResponse::new(200, body.as_bytes().to_vec()))
    }

    pub fn status(status: u16) -> Scripted {
        Ok(HttpResponse::new(status, Vec::new()))
    }

    pub fn network_error() -> Scripted {
        Err(TransportError::Network("connection reset".into()))
    }

    pub fn executions(&self) -> usize {
        self.seen.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.seen.lock().unwrap().iter().map(|(r, _)| r.clone()).collect()
    }

    pub fn execution_times(&self) -> Vec<Duration> {
        self.seen.lock().unwrap().iter().map(|(_, t)| *t).collect()
    }
}

impl Transport for ScriptedTransport {
    fn execute(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let at = self.clock.as_ref().map(|c| c.now()).unwrap_or_default();
        self.seen.lock().unwrap().push((req.clone(), at));
        self.script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Network("script exhausted".into())))
    }
}
