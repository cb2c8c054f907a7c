//! Organization classification pipeline.
//!
//! The crate is split along the stages of the pipeline:
//!
//! * [`taxonomy`]: the two label spaces (environmental issues and SIC codes)
//!   and the label descriptions used by pair-scoring models.
//! * [`ingestion`]: EDGAR company records, 10-K "Item 1" extraction and
//!   search-snippet pseudo-documents, behind a polite, cached HTTP layer.
//! * [`datasets`]: labeled dataset construction, seeded sampling, splits and
//!   target encoding.
//! * [`models`]: the hashed n-gram baseline encoder, the linear-head
//!   classifier (`OrgModel1`) and the text/description pair scorer
//!   (`OrgModel2`), plus training and model artifacts.
//! * [`metrics`]: per-class precision/recall/F1 and micro/macro averages.

pub mod datasets;
pub mod fsutil;
pub mod ingestion;
pub mod metrics;
pub mod models;
pub mod taxonomy;
