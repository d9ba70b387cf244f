//! On-disk record schemas for the ingestion pipeline.
//!
//! All inputs are line-delimited JSON (one record per line) with dates in
//! ISO-8601 day resolution (`YYYY-MM-DD`). Three files feed a corpus:
//!
//! * preprints — one record per preprint, with its repository identifier,
//!   the DOI of the published version when known, the posting date, and
//!   raw subject strings (`"Major - Minor"` format);
//! * publications — one record per published document (not only those
//!   with a preprint), with its DOI, journal, document type, and the
//!   candidate publication dates;
//! * references — one record per raw cited-reference string, dated by the
//!   day the citing document appeared, optionally carrying a
//!   resolver-matched DOI.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One preprint as posted to the repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprintRecord {
    /// Repository identifier, e.g. `astro-ph/0405353` or `1108.2700`.
    pub arxiv_id: String,
    /// DOI of the published version, when the repository links one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    /// Posting date (day 0 of the article's trajectory).
    pub date: NaiveDate,
    /// Raw subject strings in `"Major - Minor"` form.
    #[serde(default)]
    pub subjects: Vec<String>,
}

/// One published document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    /// DOI of the published document.
    pub doi: String,
    /// Journal identifier (title or ISSN — any stable key).
    pub journal: String,
    /// Document type; `article` and `review` count toward journal impact.
    #[serde(rename = "type")]
    pub kind: String,
    /// Online publication date, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_online: Option<NaiveDate>,
    /// Print publication date, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_print: Option<NaiveDate>,
    /// Metadata creation date, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<NaiveDate>,
    /// Issue date, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issued: Option<NaiveDate>,
}

/// One raw cited-reference string from some citing document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    /// Publication day of the citing document — the day the citation is
    /// counted on.
    pub date: NaiveDate,
    /// The raw reference text.
    pub text: String,
    /// DOI matched by the bibliographic resolver, when available; takes
    /// precedence over anything extracted from `text`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_doi: Option<String>,
}

/// Read a line-delimited JSON file into records, reporting the offending
/// file and line on parse failure.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: format!("{}:{}", path.display(), idx + 1),
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Write records as line-delimited JSON.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        writeln!(writer, "{line}").map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
