//! EDGAR company index, submissions metadata and 10-K retrieval.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::http::{HttpClient, Request};
use super::item1::extract_item1;
use super::{IngestError, Result};

pub const CIK_INDEX_URL: &str = "https://www.sec.gov/Archives/edgar/cik-lookup-data.txt";
pub const DATA_BASE_URL: &str = "https://data.sec.gov";
pub const ARCHIVES_BASE_URL: &str = "https://www.sec.gov";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CikEntry {
    pub name: String,
    pub cik: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CikIndex {
    pub entries: Vec<CikEntry>,
    /// Lines that did not parse as `NAME:CIK:`.
    pub skipped: usize,
}

fn parse_cik_line(line: &str) -> Option<CikEntry> {
    // names may themselves contain colons, so split from the right
    let line = line.trim_end_matches(['\r', '\n']);
    let body = line.strip_suffix(':')?;
    let (name, cik) = body.rsplit_once(':')?;
    let name = name.trim();
    if name.is_empty() || cik.is_empty() || !cik.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(CikEntry {
        name: name.to_string(),
        cik: cik.parse().ok()?,
    })
}

/// Parses the `cik-lookup-data.txt` format. Blank lines are ignored and
/// malformed lines are counted in [`CikIndex::skipped`].
pub fn parse_cik_index(text: &str) -> CikIndex {
    let mut entries = Vec::new();
    let mut skipped = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match parse_cik_line(line) {
            Some(e) => entries.push(e),
            None => skipped += 1,
        }
    }
    CikIndex { entries, skipped }
}

/// Loads the CIK index from a local path or an `http(s)` URL.
pub fn fetch_cik_index(source: &str, http: &dyn HttpClient) -> Result<CikIndex> {
    let text = if source.starts_with("http://") || source.starts_with("https://") {
        let resp = http.get(&Request::get(source))?;
        if !resp.is_success() {
            return Err(IngestError::Status {
                url: source.to_string(),
                status: resp.status,
            });
        }
        // the SEC file is latin-1; lossless for the ASCII subset we parse
        resp.body.iter().map(|&b| b as char).collect::<String>()
    } else {
        let bytes = std::fs::read(Path::new(source))?;
        bytes.iter().map(|&b| b as char).collect()
    };
    let index = parse_cik_index(&text);
    if index.skipped > 0 {
        log::warn!("skipped {} malformed line(s) in {source}", index.skipped);
    }
    if index.entries.is_empty() {
        return Err(IngestError::EmptyIndex(source.to_string()));
    }
    Ok(index)
}

/// One EDGAR company with its latest 10-K "Item 1" text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanyRecord {
    pub cik: u64,
    pub name: String,
    /// Four digit SIC code, or empty when EDGAR has none.
    pub sic: String,
    pub sic_description: String,
    /// URL of the most recent 10-K primary document.
    pub filing_url: Option<String>,
    pub filing_date: Option<String>,
    pub filing_text: String,
    /// Name, SIC, SIC description and a 10-K reference are all present.
    pub complete: bool,
}

impl CompanyRecord {
    pub fn is_complete(&self) -> bool {
        !self.name.trim().is_empty()
            && self.sic.len() == 4
            && !self.sic_description.trim().is_empty()
            && self.filing_url.as_deref().is_some_and(|u| !u.is_empty())
    }

    /// Two-digit major group of the SIC code.
    pub fn major_group(&self) -> Option<&str> {
        (self.sic.len() == 4).then(|| &self.sic[..2])
    }
}

#[derive(Debug, Deserialize)]
struct Submissions {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    sic: Option<String>,
    #[serde(default, rename = "sicDescription")]
    sic_description: Option<String>,
    #[serde(default)]
    filings: Filings,
}

#[derive(Debug, Default, Deserialize)]
struct Filings {
    #[serde(default)]
    recent: Recent,
}

#[derive(Debug, Default, Deserialize)]
struct Recent {
    #[serde(default, rename = "accessionNumber")]
    accession_number: Vec<String>,
    #[serde(default, rename = "filingDate")]
    filing_date: Vec<String>,
    #[serde(default)]
    form: Vec<String>,
    #[serde(default, rename = "primaryDocument")]
    primary_document: Vec<String>,
}

fn normalize_sic(cik: u64, raw: Option<String>) -> Result<String> {
    let raw = raw.unwrap_or_default();
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(String::new());
    }
    if raw.len() > 4 || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return Err(IngestError::Parse {
            what: format!("SIC code of CIK {cik}"),
            message: format!("{raw:?} is not a 4-digit code"),
        });
    }
    Ok(format!("{raw:0>4}"))
}

pub struct EdgarClient<H> {
    http: H,
    data_base: String,
    archives_base: String,
}

impl<H: HttpClient> EdgarClient<H> {
    pub fn new(http: H) -> Self {
        Self::with_bases(http, DATA_BASE_URL, ARCHIVES_BASE_URL)
    }

    pub fn with_bases(http: H, data_base: &str, archives_base: &str) -> Self {
        Self {
            http,
            data_base: data_base.trim_end_matches('/').to_string(),
            archives_base: archives_base.trim_end_matches('/').to_string(),
        }
    }

    pub fn submissions_url(&self, cik: u64) -> String {
        format!("{}/submissions/CIK{cik:010}.json", self.data_base)
    }

    /// Builds the company record from the submissions metadata and the most
    /// recent 10-K primary document.
    pub fn fetch_company_record(&self, cik: u64) -> Result<CompanyRecord> {
        let url = self.submissions_url(cik);
        let resp = self.http.get(&Request::get(&url))?;
        match resp.status {
            404 => return Err(IngestError::NotFound(format!("CIK {cik}"))),
            s if !(200..300).contains(&s) => return Err(IngestError::Status { url, status: s }),
            _ => {}
        }
        let subs: Submissions =
            serde_json::from_slice(&resp.body).map_err(|e| IngestError::Parse {
                what: url.clone(),
                message: e.to_string(),
            })?;
        let sic = normalize_sic(cik, subs.sic)?;
        let recent = &subs.filings.recent;
        // the most recent 10-K; `recent` is newest first but order by date anyway
        let latest = (0..recent.form.len())
            .filter(|&i| recent.form[i] == "10-K")
            .filter(|&i| i < recent.accession_number.len() && i < recent.primary_document.len())
            .max_by(|&a, &b| {
                let da = recent.filing_date.get(a).map(String::as_str).unwrap_or("");
                let db = recent.filing_date.get(b).map(String::as_str).unwrap_or("");
                da.cmp(db).then(b.cmp(&a))
            });
        let (filing_url, filing_date, filing_text) = match latest {
            Some(i) if !recent.primary_document[i].is_empty() => {
                let accession = recent.accession_number[i].replace('-', "");
                let doc_url = format!(
                    "{}/Archives/edgar/data/{cik}/{accession}/{}",
                    self.archives_base, recent.primary_document[i]
                );
                let doc = self.http.get(&Request::get(&doc_url))?;
                let text = if doc.is_success() {
                    extract_item1(&doc.text())
                } else {
                    log::warn!("10-K document {doc_url} returned HTTP {}", doc.status);
                    String::new()
                };
                (Some(doc_url), recent.filing_date.get(i).cloned(), text)
            }
            _ => (None, None, String::new()),
        };
        let mut record = CompanyRecord {
            cik,
            name: subs.name.unwrap_or_default().trim().to_string(),
            sic,
            sic_description: subs.sic_description.unwrap_or_default().trim().to_string(),
            filing_url,
            filing_date,
            filing_text,
            complete: false,
        };
        record.complete = record.is_complete();
        Ok(record)
    }
}
