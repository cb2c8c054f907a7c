//! Web search providers returning ranked organic results.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use super::http::{HttpClient, Request};
use super::{IngestError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    /// 1-based position in the provider's organic ranking.
    pub rank: u32,
    pub url: String,
    pub title: String,
    /// May be empty; never invented when the provider omits it.
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResponse {
    pub results: Vec<SearchResult>,
    pub retrieved_at: DateTime<Utc>,
}

pub trait SearchProvider: Send + Sync {
    /// Organic results for `query` in provider rank order.
    fn search(&self, query: &str) -> Result<SearchResponse>;
}

/// Result row without a rank; rank is implied by position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureResult {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub snippet: String,
}

fn ranked(rows: impl IntoIterator<Item = FixtureResult>) -> Vec<SearchResult> {
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| SearchResult {
            rank: i as u32 + 1,
            url: r.url,
            title: r.title,
            snippet: r.snippet,
        })
        .collect()
}

/// Deterministic provider backed by a `query -> results` map. Unknown
/// queries return no results.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    responses: BTreeMap<String, Vec<FixtureResult>>,
    retrieved_at: DateTime<Utc>,
}

impl FixtureProvider {
    pub fn new(responses: BTreeMap<String, Vec<FixtureResult>>) -> Self {
        Self {
            responses,
            retrieved_at: Utc.timestamp_opt(0, 0).unwrap(),
        }
    }

    /// Reads a JSON object mapping each query to its result list.
    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let responses = serde_json::from_slice(&bytes).map_err(|e| IngestError::Parse {
            what: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self::new(responses))
    }

    pub fn with_retrieved_at(mut self, at: DateTime<Utc>) -> Self {
        self.retrieved_at = at;
        self
    }
}

impl SearchProvider for FixtureProvider {
    fn search(&self, query: &str) -> Result<SearchResponse> {
        Ok(SearchResponse {
            results: ranked(self.responses.get(query).cloned().unwrap_or_default()),
            retrieved_at: self.retrieved_at,
        })
    }
}

pub const SERPAPI_ENDPOINT: &str = "https://serpapi.com/search.json";

#[derive(Debug, Deserialize)]
struct SerpPayload {
    #[serde(default)]
    organic_results: Vec<SerpOrganic>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SerpOrganic {
    #[serde(default)]
    position: Option<u32>,
    #[serde(default)]
    title: String,
    #[serde(default)]
    link: String,
    #[serde(default)]
    snippet: String,
}

/// Maps a Google-results JSON payload (`organic_results[]` with `title`,
/// `link`, `snippet`) onto ranked results.
pub fn parse_organic_results(body: &[u8]) -> Result<Vec<SearchResult>> {
    let payload: SerpPayload = serde_json::from_slice(body).map_err(|e| IngestError::Parse {
        what: "search response".into(),
        message: e.to_string(),
    })?;
    if let Some(err) = payload.error {
        // the API reports "no results" as an error message
        if err
            .to_ascii_lowercase()
            .contains("hasn't returned any results")
        {
            return Ok(Vec::new());
        }
        return Err(IngestError::Parse {
            what: "search response".into(),
            message: err,
        });
    }
    let mut rows = payload.organic_results;
    rows.sort_by_key(|r| r.position.unwrap_or(u32::MAX));
    Ok(ranked(rows.into_iter().map(|r| FixtureResult {
        title: r.title,
        url: r.link,
        snippet: r.snippet,
    })))
}

/// Live Google search through SerpApi.
pub struct SerpApiProvider<H> {
    http: H,
    api_key: String,
    endpoint: String,
    num: usize,
}

impl<H: HttpClient> SerpApiProvider<H> {
    pub fn new(http: H, api_key: impl Into<String>, num: usize) -> Self {
        Self {
            http,
            api_key: api_key.into(),
            endpoint: SERPAPI_ENDPOINT.to_string(),
            num,
        }
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }

    fn urls(&self, query: &str) -> (String, String) {
        let base = reqwest::Url::parse_with_params(
            &self.endpoint,
            &[
                ("engine", "google"),
                ("q", query),
                ("num", &self.num.to_string()),
            ],
        )
        .expect("valid endpoint");
        let cache_key = base.to_string();
        let mut full = base;
        full.query_pairs_mut().append_pair("api_key", &self.api_key);
        (full.to_string(), cache_key)
    }
}

impl<H: HttpClient> SearchProvider for SerpApiProvider<H> {
    fn search(&self, query: &str) -> Result<SearchResponse> {
        let (url, cache_key) = self.urls(query);
        let resp = self
            .http
            .get(&Request::with_cache_key(url, cache_key.clone()))?;
        if !resp.is_success() {
            return Err(IngestError::Status {
                url: cache_key,
                status: resp.status,
            });
        }
        Ok(SearchResponse {
            results: parse_organic_results(&resp.body)?,
            retrieved_at: resp.fetched_at,
        })
    }
}
