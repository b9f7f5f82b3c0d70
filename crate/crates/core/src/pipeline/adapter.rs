//! Pluggable per-EDU translation backends and the append-only file cache.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, RwLock};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("no dictionary entry for '{0}'")]
    Missing(String),

    #[error("translation of '{0}' is empty")]
    Empty(String),

    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("unrecognized response: {0}")]
    Response(String),

    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<AdapterError> },

    #[error("adapter configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AdapterError {
    fn retryable(&self) -> bool {
        match self {
            AdapterError::Transport(_) => true,
            AdapterError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Translates one text segment between two languages.
pub trait TranslationAdapter: Send + Sync {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, AdapterError>;
}

impl<T: TranslationAdapter + ?Sized> TranslationAdapter for Box<T> {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, AdapterError> {
        (**self).translate(text, source_lang, target_lang)
    }
}

/// Pass-through.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityAdapter;

impl TranslationAdapter for IdentityAdapter {
    fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, AdapterError> {
        Ok(text.to_owned())
    }
}

/// Exact-match lookup in a `source<TAB>target` table.
#[derive(Clone, Debug, Default)]
pub struct DictionaryAdapter {
    entries: HashMap<String, String>,
}

impl DictionaryAdapter {
    pub fn from_entries<I, S, T>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        DictionaryAdapter {
            entries: entries.into_iter().map(|(s, t)| (s.into(), t.into())).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, AdapterError> {
        let text = fs::read_to_string(path).map_err(|source| AdapterError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut entries = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (source, target) = parse_record(line).ok_or_else(|| {
                AdapterError::Config(format!("{}:{}: expected source<TAB>target", path.display(), n + 1))
            })?;
            entries.insert(source, target);
        }
        Ok(DictionaryAdapter { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TranslationAdapter for DictionaryAdapter {
    fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, AdapterError> {
        self.entries
            .get(text)
            .cloned()
            .ok_or_else(|| AdapterError::Missing(text.to_owned()))
    }
}

/// JSON-over-HTTP MT endpoint.
///
/// Sends `{"text", "source_lang", "target_lang"}` as a POST body and accepts
/// `{"translation": ..}`, `{"translatedText": ..}` or
/// `{"translations": [{"text": ..}]}` back. Transport failures, 429 and 5xx
/// responses are retried with exponential backoff.
pub struct HttpAdapter {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    retries: u32,
    backoff: Duration,
}

impl HttpAdapter {
    pub const DEFAULT_RETRIES: u32 = 3;

    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, AdapterError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| AdapterError::Config(e.to_string()))?;
        Ok(HttpAdapter {
            client,
            endpoint: endpoint.into(),
            api_key,
            retries: Self::DEFAULT_RETRIES,
            backoff: Duration::from_millis(500),
        })
    }

    /// Retries after the first attempt; the n-th retry waits `backoff * 2^(n-1)`.
    pub fn with_retries(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    fn request(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, AdapterError> {
        let body = serde_json::json!({
            "text": text,
            "source_lang": source_lang,
            "target_lang": target_lang,
        });
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| AdapterError::Transport(e.to_string()))?;
        let status = resp.status();
        let payload = resp.text().map_err(|e| AdapterError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(AdapterError::Status {
                status: status.as_u16(),
                body: payload,
            });
        }
        let json: Value = serde_json::from_str(&payload).map_err(|_| AdapterError::Response(payload.clone()))?;
        json.get("translation")
            .or_else(|| json.get("translatedText"))
            .or_else(|| json.pointer("/translations/0/text"))
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or(AdapterError::Response(payload))
    }
}

impl fmt::Debug for HttpAdapter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpAdapter")
            .field("endpoint", &self.endpoint)
            .field("retries", &self.retries)
            .finish_non_exhaustive()
    }
}

impl TranslationAdapter for HttpAdapter {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, AdapterError> {
        let mut attempt = 0;
        loop {
            match self.request(text, source_lang, target_lang) {
                Ok(t) => return Ok(t),
                Err(e) if e.retryable() && attempt < self.retries => {
                    let wait = self.backoff * 2u32.pow(attempt);
                    warn!("translation request failed ({e}); retrying in {wait:?}");
                    thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) if e.retryable() => {
                    return Err(AdapterError::Exhausted {
                        attempts: attempt + 1,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

/// One `source<TAB>target` line, backslash-escaped.
pub fn format_record(source: &str, target: &str) -> String {
    format!("{}\t{}\n", escape(source), escape(target))
}

pub fn parse_record(line: &str) -> Option<(String, String)> {
    let (s, t) = line.split_once('\t')?;
    Some((unescape(s), unescape(t)))
}

/// Translations of one language pair, backed by an append-only
/// `source<TAB>target` file. Readers share the map; appends are serialized.
#[derive(Debug)]
pub struct TranslationCache {
    source_lang: String,
    target_lang: String,
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<Option<(PathBuf, File)>>,
}

impl TranslationCache {
    pub fn in_memory(source_lang: &str, target_lang: &str) -> Self {
        TranslationCache {
            source_lang: source_lang.to_owned(),
            target_lang: target_lang.to_owned(),
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Loads `path` if it exists and appends new entries to it.
    pub fn open(path: &Path, source_lang: &str, target_lang: &str) -> Result<Self, AdapterError> {
        let io = |source| AdapterError::Io {
            path: path.to_owned(),
            source,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            for line in fs::read_to_string(path).map_err(io)?.lines() {
                // A torn final line from an interrupted run is skipped.
                if let Some((s, t)) = parse_record(line) {
                    entries.insert(s, t);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(TranslationCache {
            source_lang: source_lang.to_owned(),
            target_lang: target_lang.to_owned(),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some((path.to_owned(), file))),
        })
    }

    fn serves(&self, source_lang: &str, target_lang: &str) -> bool {
        self.source_lang == source_lang && self.target_lang == target_lang
    }

    pub fn get(&self, text: &str) -> Option<String> {
        self.entries.read().expect("cache lock").get(text).cloned()
    }

    pub fn insert(&self, text: &str, translation: &str) -> Result<(), AdapterError> {
        let mut writer = self.writer.lock().expect("cache writer lock");
        {
            let mut entries = self.entries.write().expect("cache lock");
            if entries.get(text).is_some_and(|t| t == translation) {
                return Ok(());
            }
            entries.insert(text.to_owned(), translation.to_owned());
        }
        if let Some((path, file)) = writer.as_mut() {
            file.write_all(format_record(text, translation).as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| AdapterError::Io {
                    path: path.clone(),
                    source,
                })?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Consults the cache before the wrapped adapter and records fresh results.
pub struct CachedAdapter<A> {
    inner: A,
    cache: TranslationCache,
}

impl<A: TranslationAdapter> CachedAdapter<A> {
    pub fn new(inner: A, cache: TranslationCache) -> Self {
        CachedAdapter { inner, cache }
    }

    pub fn cache(&self) -> &TranslationCache {
        &self.cache
    }
}

impl<A: TranslationAdapter> TranslationAdapter for CachedAdapter<A> {
    fn translate(&self, text: &str, source_lang: &str, target_lang: &str) -> Result<String, AdapterError> {
        if !self.cache.serves(source_lang, target_lang) {
            return self.inner.translate(text, source_lang, target_lang);
        }
        if let Some(hit) = self.cache.get(text) {
            debug!("cache hit for '{text}'");
            return Ok(hit);
        }
        let translation = self.inner.translate(text, source_lang, target_lang)?;
        if !translation.trim().is_empty() {
            self.cache.insert(text, &translation)?;
        }
        Ok(translation)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdapterKind {
    Http,
    Dict,
    #[default]
    Identity,
}

impl FromStr for AdapterKind {
    type Err = AdapterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "http" => Ok(AdapterKind::Http),
            "dict" => Ok(AdapterKind::Dict),
            "identity" => Ok(AdapterKind::Identity),
            other => Err(AdapterError::Config(format!(
                "unknown adapter '{other}' (expected http, dict or identity)"
            ))),
        }
    }
}

impl fmt::Display for AdapterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdapterKind::Http => "http",
            AdapterKind::Dict => "dict",
            AdapterKind::Identity => "identity",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdapterConfig {
    pub kind: AdapterKind,
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub dict_file: Option<PathBuf>,
}

impl AdapterConfig {
    pub fn build(&self) -> Result<Box<dyn TranslationAdapter>, AdapterError> {
        Ok(match self.kind {
            AdapterKind::Identity => Box::new(IdentityAdapter),
            AdapterKind::Dict => {
                let path = self
                    .dict_file
                    .as_ref()
                    .ok_or_else(|| AdapterError::Config("the dict adapter needs a dictionary file".into()))?;
                Box::new(DictionaryAdapter::load(path)?)
            }
            AdapterKind::Http => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| AdapterError::Config("the http adapter needs an endpoint".into()))?;
                let api_key = match &self.api_key_env {
                    Some(var) => Some(
                        std::env::var(var)
                            .map_err(|_| AdapterError::Config(format!("environment variable {var} is not set")))?,
                    ),
                    None => None,
                };
                Box::new(HttpAdapter::new(endpoint, api_key)?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn records_round_trip_with_escapes() {
        for (s, t) in [("实验表明", "Experiments show that"), ("a\tb", "c\nd\\e")] {
            let line = format_record(s, t);
            assert_eq!(line.matches('\t').count(), 1);
            assert_eq!(
                parse_record(line.trim_end_matches('\n')),
                Some((s.to_owned(), t.to_owned()))
            );
        }
    }

    #[test]
    fn dictionary_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.tsv");
        fs::write(&path, "实验表明\tExperiments show that\n\n该文\tThis paper\n").unwrap();
        let d = DictionaryAdapter::load(&path).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.translate("实验表明", "zh", "en").unwrap(), "Experiments show that");
        assert!(matches!(d.translate("没有", "zh", "en"), Err(AdapterError::Missing(_))));
    }

    #[test]
    fn cache_persists_and_short_circuits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.tsv");
        let calls = AtomicUsize::new(0);
        struct Counting<'a>(&'a AtomicUsize);
        impl TranslationAdapter for Counting<'_> {
            fn translate(&self, text: &str, _: &str, _: &str) -> Result<String, AdapterError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Ok(format!("<{text}>"))
            }
        }
        {
            let a = CachedAdapter::new(Counting(&calls), TranslationCache::open(&path, "zh", "en").unwrap());
            assert_eq!(a.translate("x", "zh", "en").unwrap(), "<x>");
            assert_eq!(a.translate("x", "zh", "en").unwrap(), "<x>");
            assert_eq!(calls.load(Ordering::SeqCst), 1);
            // other pairs bypass the cache
            a.translate("x", "ja", "en").unwrap();
            assert_eq!(a.cache().len(), 1);
        }
        assert_eq!(fs::read_to_string(&path).unwrap(), "x\t<x>\n");
        let reopened = TranslationCache::open(&path, "zh", "en").unwrap();
        assert_eq!(reopened.get("x").as_deref(), Some("<x>"));
    }

    /// Serves canned HTTP responses in order, one per connection.
    fn serve(responses: Vec<(u16, &'static str)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/translate", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = Arc::clone(&hits);
        thread::spawn(move || {
            for (status, body) in responses {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (url, hits)
    }

    #[test]
    fn http_adapter_retries_server_errors() {
        let (url, hits) = serve(vec![
            (503, "{}"),
            (500, "{}"),
            (200, r#"{"translation": "Experiments show that"}"#),
        ]);
        let a = HttpAdapter::new(url, Some("k".into()))
            .unwrap()
            .with_retries(3, Duration::from_millis(1));
        assert_eq!(a.translate("实验表明", "zh", "en").unwrap(), "Experiments show that");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn http_adapter_gives_up() {
        let (url, hits) = serve(vec![(500, "{}"); 4]);
        let a = HttpAdapter::new(url, None)
            .unwrap()
            .with_retries(3, Duration::from_millis(1));
        match a.translate("x", "zh", "en") {
            Err(AdapterError::Exhausted { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(hits.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn http_adapter_does_not_retry_client_errors() {
        let (url, hits) = serve(vec![(400, "bad"), (200, r#"{"translatedText": "x"}"#)]);
        let a = HttpAdapter::new(url, None)
            .unwrap()
            .with_retries(3, Duration::from_millis(1));
        assert!(matches!(
            a.translate("x", "zh", "en"),
            Err(AdapterError::Status { status: 400, .. })
        ));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn http_adapter_accepts_alternative_shapes() {
        let (url, _) = serve(vec![(200, r#"{"translations": [{"text": "hello"}]}"#)]);
        let a = HttpAdapter::new(url, None).unwrap();
        assert_eq!(a.translate("你好", "zh", "en").unwrap(), "hello");
    }
}
