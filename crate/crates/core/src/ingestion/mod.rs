//! Raw text acquisition: EDGAR company records with 10-K "Item 1" text, and
//! search-snippet pseudo-documents.
//!
//! Every network call goes through [`http::HttpClient`]. The production stack
//! is `CachedClient<PoliteClient<ReqwestClient>>`: cache hits never touch the
//! network, and misses are rate limited per host, retried with exponential
//! backoff and capped in concurrency.

pub mod edgar;
pub mod http;
pub mod item1;
pub mod mock;
pub mod pool;
pub mod pseudodoc;
pub mod search;

pub use edgar::{fetch_cik_index, parse_cik_index, CikEntry, CikIndex, CompanyRecord, EdgarClient};
pub use item1::{extract_item1, strip_markup};
pub use pseudodoc::{build_pseudodoc, concat_snippets, PseudoDoc};
pub use search::{FixtureProvider, SearchProvider, SearchResponse, SearchResult, SerpApiProvider};

use thiserror::Error;

/// API key for the live search provider.
pub const SEARCH_API_KEY_ENV: &str = "ORGCLASS_SEARCH_API_KEY";
/// Overrides the on-disk response cache directory.
pub const CACHE_DIR_ENV: &str = "ORGCLASS_CACHE_DIR";
/// Overrides the per-host request rate (requests per second).
pub const RATE_LIMIT_ENV: &str = "ORGCLASS_RATE_LIMIT";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("request to {url} failed after {attempts} attempt(s): {message}")]
    Transport {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("{url} returned HTTP {status}")]
    Status { url: String, status: u16 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("could not parse {what}: {message}")]
    Parse { what: String, message: String },
    #[error("CIK index source {0} contained no parseable entries")]
    EmptyIndex(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IngestError>;
