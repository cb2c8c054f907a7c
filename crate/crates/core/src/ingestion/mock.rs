//! In-memory [`HttpClient`] that records every request it receives.
//!
//! Used by tests to replay recorded responses and to observe politeness:
//! request timestamps per URL and the peak number of concurrent calls.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};

use super::http::{HttpClient, Request, Response};
use super::Result;

#[derive(Debug, Clone)]
pub struct LoggedRequest {
    pub url: String,
    pub at: Instant,
}

type Routes = HashMap<String, VecDeque<(u16, Vec<u8>)>>;

pub struct MockHttp {
    routes: Mutex<Routes>,
    log: Mutex<Vec<LoggedRequest>>,
    latency: Duration,
    fetched_at: DateTime<Utc>,
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl Default for MockHttp {
    fn default() -> Self {
        Self::new()
    }
}

impl MockHttp {
    pub fn new() -> Self {
        Self {
            routes: Mutex::new(HashMap::new()),
            log: Mutex::new(Vec::new()),
            latency: Duration::ZERO,
            fetched_at: Utc.with_ymd_and_hms(2023, 5, 1, 0, 0, 0).unwrap(),
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    /// Every call sleeps this long, which makes overlap observable.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Serves `body` with `status` for every request to `url`.
    pub fn route(&self, url: &str, status: u16, body: impl Into<Vec<u8>>) {
        self.route_sequence(url, vec![(status, body.into())]);
    }

    /// Serves the responses in order; the last one repeats.
    pub fn route_sequence(&self, url: &str, responses: Vec<(u16, Vec<u8>)>) {
        self.routes
            .lock()
            .unwrap()
            .insert(url.to_string(), responses.into_iter().collect());
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn request_count(&self, url: &str) -> usize {
        self.log
            .lock()
            .unwrap()
            .iter()
            .filter(|r| r.url == url)
            .count()
    }

    pub fn total_requests(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl HttpClient for MockHttp {
    fn get(&self, req: &Request) -> Result<Response> {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.log.lock().unwrap().push(LoggedRequest {
            url: req.url.clone(),
            at: Instant::now(),
        });
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let (status, body) = {
            let mut routes = self.routes.lock().unwrap();
            match routes.get_mut(&req.url) {
                Some(q) if q.len() > 1 => q.pop_front().unwrap(),
                Some(q) => q.front().cloned().unwrap(),
                None => (404, Vec::new()),
            }
        };
        self.current.fetch_sub(1, Ordering::SeqCst);
        Ok(Response {
            status,
            body,
            fetched_at: self.fetched_at,
        })
    }
}
