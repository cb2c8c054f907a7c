//! Blocking HTTP with politeness, retries and an on-disk cache.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{IngestError, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub url: String,
    /// Identity of the request for caching. Must not contain secrets.
    pub cache_key: String,
}

impl Request {
    pub fn get(url: impl Into<String>) -> Self {
        let url = url.into();
        Self {
            cache_key: url.clone(),
            url,
        }
    }

    pub fn with_cache_key(url: impl Into<String>, cache_key: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            cache_key: cache_key.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: Vec<u8>,
    pub fetched_at: DateTime<Utc>,
}

impl Response {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }
}

pub trait HttpClient: Send + Sync {
    /// Performs a GET. Non-2xx statuses are returned as responses, only
    /// failures to obtain any response are errors.
    fn get(&self, req: &Request) -> Result<Response>;
}

impl<T: HttpClient + ?Sized> HttpClient for &T {
    fn get(&self, req: &Request) -> Result<Response> {
        (**self).get(req)
    }
}

impl<T: HttpClient + ?Sized> HttpClient for std::sync::Arc<T> {
    fn get(&self, req: &Request) -> Result<Response> {
        (**self).get(req)
    }
}

/// Plain reqwest client carrying a mandatory User-Agent.
pub struct ReqwestClient {
    client: reqwest::blocking::Client,
}

impl ReqwestClient {
    pub fn new(user_agent: &str, timeout: Duration) -> Result<Self> {
        if user_agent.trim().is_empty() {
            return Err(IngestError::InvalidInput(
                "a descriptive User-Agent is required".into(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .user_agent(user_agent)
            .timeout(timeout)
            .build()
            .map_err(|e| IngestError::InvalidInput(e.to_string()))?;
        Ok(Self { client })
    }
}

impl HttpClient for ReqwestClient {
    fn get(&self, req: &Request) -> Result<Response> {
        let transport = |e: reqwest::Error| IngestError::Transport {
            url: req.cache_key.clone(),
            attempts: 1,
            message: e.to_string(),
        };
        let resp = self.client.get(&req.url).send().map_err(transport)?;
        let status = resp.status().as_u16();
        let body = resp.bytes().map_err(transport)?.to_vec();
        Ok(Response {
            status,
            body,
            fetched_at: Utc::now(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Politeness {
    /// Minimum spacing between requests to the same host.
    pub min_interval: Duration,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles on every further attempt.
    pub backoff_base: Duration,
    pub max_in_flight: usize,
}

impl Default for Politeness {
    fn default() -> Self {
        Self {
            min_interval: Duration::from_secs(1),
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }
}

impl Politeness {
    pub fn with_rate(mut self, requests_per_sec: f64) -> Self {
        self.min_interval = if requests_per_sec > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_sec)
        } else {
            Duration::ZERO
        };
        self
    }
}

fn host_of(url: &str) -> String {
    reqwest::Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(str::to_string))
        .unwrap_or_default()
}

fn retryable_status(status: u16) -> bool {
    status == 429 || status >= 500
}

/// Rate limiting, bounded concurrency and retries around another client.
pub struct PoliteClient<C> {
    inner: C,
    policy: Politeness,
    next_slot: Mutex<HashMap<String, Instant>>,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
}

impl<C: HttpClient> PoliteClient<C> {
    pub fn new(inner: C, policy: Politeness) -> Self {
        Self {
            inner,
            policy,
            next_slot: Mutex::new(HashMap::new()),
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
        }
    }

    fn wait_for_host(&self, host: &str) {
        let start = {
            let mut slots = self.next_slot.lock().expect("rate-limit lock");
            let now = Instant::now();
            let start = slots.get(host).copied().map_or(now, |t| t.max(now));
            slots.insert(host.to_string(), start + self.policy.min_interval);
            start
        };
        let now = Instant::now();
        if start > now {
            std::thread::sleep(start - now);
        }
    }

    fn acquire(&self) {
        let limit = self.policy.max_in_flight.max(1);
        let mut n = self.in_flight.lock().expect("in-flight lock");
        while *n >= limit {
            n = self.slot_freed.wait(n).expect("in-flight lock");
        }
        *n += 1;
    }

    fn release(&self) {
        *self.in_flight.lock().expect("in-flight lock") -= 1;
        self.slot_freed.notify_one();
    }
}

impl<C: HttpClient> HttpClient for PoliteClient<C> {
    fn get(&self, req: &Request) -> Result<Response> {
        let host = host_of(&req.url);
        let attempts = self.policy.max_attempts.max(1);
        let mut last_err = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                let backoff = self.policy.backoff_base * 2u32.pow(attempt - 2);
                std::thread::sleep(backoff);
            }
            self.acquire();
            self.wait_for_host(&host);
            let result = self.inner.get(req);
            self.release();
            match result {
                Ok(resp) if retryable_status(resp.status) => {
                    log::warn!(
                        "{} returned {} (attempt {attempt})",
                        req.cache_key,
                        resp.status
                    );
                    last_err = format!("HTTP {}", resp.status);
                }
                Ok(resp) => return Ok(resp),
                Err(IngestError::Transport { message, .. }) => {
                    log::warn!("{} failed (attempt {attempt}): {message}", req.cache_key);
                    last_err = message;
                }
                Err(e) => return Err(e),
            }
        }
        Err(IngestError::Transport {
            url: req.cache_key.clone(),
            attempts,
            message: last_err,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheMeta {
    cache_key: String,
    status: u16,
    fetched_at: DateTime<Utc>,
}

/// Refuses every request; paired with [`CachedClient`] it replays a run
/// purely from the cache.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineClient;

impl HttpClient for OfflineClient {
    fn get(&self, req: &Request) -> Result<Response> {
        Err(IngestError::Transport {
            url: req.url.clone(),
            attempts: 0,
            message: "offline mode and no cached response".into(),
        })
    }
}

/// Content-addressed response cache. Successful responses are stored under
/// `sha256(cache_key)`; concurrent writers are safe because both files are
/// written with write-then-rename.
pub struct CachedClient<C> {
    inner: C,
    dir: PathBuf,
}

impl<C: HttpClient> CachedClient<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
        }
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        let h = fsutil::sha256_hex(key.as_bytes());
        let sub = self.dir.join(&h[..2]);
        (sub.join(format!("{h}.json")), sub.join(format!("{h}.body")))
    }

    fn lookup(&self, meta: &Path, body: &Path) -> Option<Response> {
        let meta: CacheMeta = fsutil::read_json(meta).ok()?;
        let body = std::fs::read(body).ok()?;
        Some(Response {
            status: meta.status,
            body,
            fetched_at: meta.fetched_at,
        })
    }
}

impl<C: HttpClient> HttpClient for CachedClient<C> {
    fn get(&self, req: &Request) -> Result<Response> {
        let (meta_path, body_path) = self.paths(&req.cache_key);
        if let Some(hit) = self.lookup(&meta_path, &body_path) {
            log::debug!("cache hit {}", req.cache_key);
            return Ok(hit);
        }
        let resp = self.inner.get(req)?;
        if resp.is_success() {
            // body first: a metadata file only exists next to a complete body
            fsutil::write_atomic(&body_path, &resp.body)?;
            let meta = CacheMeta {
                cache_key: req.cache_key.clone(),
                status: resp.status,
                fetched_at: resp.fetched_at,
            };
            fsutil::write_json_pretty(&meta_path, &meta)?;
        }
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::mock::MockHttp;

    fn fast(max_in_flight: usize) -> Politeness {
        Politeness {
            min_interval: Duration::ZERO,
            max_attempts: 3,
            backoff_base: Duration::from_millis(1),
            max_in_flight,
        }
    }

    #[test]
    fn retries_then_gives_up() {
        let mock = MockHttp::new();
        mock.route_sequence(
            "https://a.test/x",
            vec![(503, b"".to_vec()), (200, b"ok".to_vec())],
        );
        let client = PoliteClient::new(&mock, fast(1));
        let resp = client.get(&Request::get("https://a.test/x")).unwrap();
        assert_eq!(resp.body, b"ok");
        assert_eq!(mock.request_count("https://a.test/x"), 2);

        mock.route_sequence("https://a.test/down", vec![(500, vec![]); 5]);
        let err = client
            .get(&Request::get("https://a.test/down"))
            .unwrap_err();
        assert!(
            matches!(err, IngestError::Transport { attempts: 3, .. }),
            "{err}"
        );
        assert_eq!(mock.request_count("https://a.test/down"), 3);
    }

    #[test]
    fn not_found_is_not_retried() {
        let mock = MockHttp::new();
        let client = PoliteClient::new(&mock, fast(1));
        let resp = client.get(&Request::get("https://a.test/missing")).unwrap();
        assert_eq!(resp.status, 404);
        assert_eq!(mock.request_count("https://a.test/missing"), 1);
    }

    #[test]
    fn cache_serves_second_call() {
        let dir = tempfile::tempdir().unwrap();
        let mock = MockHttp::new();
        mock.route("https://a.test/doc", 200, b"body".to_vec());
        let client = CachedClient::new(&mock, dir.path());
        let a = client.get(&Request::get("https://a.test/doc")).unwrap();
        let b = client.get(&Request::get("https://a.test/doc")).unwrap();
        assert_eq!(a, b);
        assert_eq!(mock.request_count("https://a.test/doc"), 1);
        // misses are not cached
        client.get(&Request::get("https://a.test/none")).unwrap();
        client.get(&Request::get("https://a.test/none")).unwrap();
        assert_eq!(mock.request_count("https://a.test/none"), 2);
    }

    #[test]
    fn cache_key_hides_secrets() {
        let dir = tempfile::tempdir().unwrap();
        let mock = MockHttp::new();
        mock.route("https://a.test/s?key=secret1", 200, b"r".to_vec());
        mock.route("https://a.test/s?key=secret2", 200, b"r".to_vec());
        let client = CachedClient::new(&mock, dir.path());
        client
            .get(&Request::with_cache_key(
                "https://a.test/s?key=secret1",
                "s",
            ))
            .unwrap();
        client
            .get(&Request::with_cache_key(
                "https://a.test/s?key=secret2",
                "s",
            ))
            .unwrap();
        assert_eq!(mock.total_requests(), 1);
        for entry in walk(dir.path()) {
            let text = std::fs::read_to_string(entry).unwrap_or_default();
            assert!(!text.contains("secret"));
        }
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                out.extend(walk(&p));
            } else {
                out.push(p);
            }
        }
        out
    }
}
