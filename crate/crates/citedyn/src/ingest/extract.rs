//! Identifier extraction from raw reference strings.
//!
//! Two normative regular expressions drive the whole matching step; their
//! behavior — including quirks like accepting month `00` in new-style
//! repository identifiers — is pinned by a conformance corpus and must
//! never change across releases.

use once_cell::sync::Lazy;
use regex::Regex;

use super::records::ReferenceRecord;

/// arXiv identifiers: old-style `archive/NNNNNNN` (alphabetic archive
/// name, optional spaces around the slash, seven or more digits) or
/// new-style `arXiv:YYMM.NNNN[N]` with a case-insensitive prefix, years
/// 00–19 and months 00–12.
static ARXIV_ID: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"[a-zA-Z\-\.]+ ?/ ?[0-9]{7,}|[aA][rR][xX][iI][vV]:[0-1][0-9]([0][0-9]|[1][0-2])\.[0-9]{4,5}",
    )
    .unwrap()
});

/// DOIs: the `10.` directory prefix, a registrant of at least four digits
/// (dot-separated subdivisions allowed), a slash, and a suffix running up
/// to the last word boundary before whitespace.
static DOI: Lazy<Regex> = Lazy::new(|| Regex::new(r"\b10\.[0-9]{4,}(\.[0-9]+)*/\S*\b").unwrap());

/// Find the leftmost arXiv identifier in raw text. New-style matches have
/// their `arXiv:` prefix stripped; old-style matches are returned exactly
/// as they appear.
pub fn find_arxiv_id(text: &str) -> Option<String> {
    let matched = ARXIV_ID.find(text)?.as_str();
    let id = if matched.len() > 6 && matched[..6].eq_ignore_ascii_case("arxiv:") {
        &matched[6..]
    } else {
        matched
    };
    Some(id.to_string())
}

/// Find the leftmost DOI in raw text.
pub fn find_doi(text: &str) -> Option<String> {
    DOI.find(text).map(|m| m.as_str().to_string())
}

/// arXiv identifier cited by a reference record, if any.
pub fn extract_arxiv_id(record: &ReferenceRecord) -> Option<String> {
    find_arxiv_id(&record.text)
}

/// DOI cited by a reference record: the resolver-matched DOI when the
/// record carries one, otherwise the leftmost DOI in the raw text.
pub fn extract_doi(record: &ReferenceRecord) -> Option<String> {
    if let Some(doi) = &record.resolved_doi {
        return Some(doi.clone());
    }
    find_doi(&record.text)
}
