use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::search::{SearchProvider, SearchResult};
use super::{IngestError, Result};

/// The concatenated snippets of an organization's top search results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoDoc {
    pub org_id: String,
    /// The query as issued: the bare organization name.
    pub query: String,
    pub retrieved_at: DateTime<Utc>,
    pub results: Vec<SearchResult>,
    pub text: String,
    pub usable: bool,
}

/// Non-empty snippets in rank order, joined by a single space.
pub fn concat_snippets(results: &[SearchResult]) -> String {
    let mut sorted: Vec<&SearchResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.rank);
    sorted
        .iter()
        .map(|r| r.snippet.as_str())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

impl PseudoDoc {
    /// Whether `text` is exactly the concatenation of `results`.
    pub fn is_consistent(&self) -> bool {
        self.text == concat_snippets(&self.results) && self.usable == !self.text.is_empty()
    }
}

/// Searches for `org_name` and keeps the first `top_n` organic results.
pub fn build_pseudodoc(
    org_id: &str,
    org_name: &str,
    provider: &dyn SearchProvider,
    top_n: usize,
) -> Result<PseudoDoc> {
    if org_name.trim().is_empty() {
        return Err(IngestError::InvalidInput(format!(
            "organization {org_id:?} has an empty name"
        )));
    }
    let resp = provider.search(org_name)?;
    let results: Vec<SearchResult> = resp.results.into_iter().take(top_n).collect();
    let text = concat_snippets(&results);
    Ok(PseudoDoc {
        org_id: org_id.to_string(),
        query: org_name.to_string(),
        retrieved_at: resp.retrieved_at,
        usable: !text.is_empty(),
        results,
        text,
    })
}
