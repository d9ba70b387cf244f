//! Bibliometric data preparation: reference parsing, date resolution,
//! subject assignment, citation splitting, journal impact, and subset
//! construction.

pub mod extract;
pub mod pipeline;
pub mod records;

pub use extract::{extract_arxiv_id, extract_doi, find_arxiv_id, find_doi};
pub use pipeline::{
    assemble_corpus, assign_subjects, build_subsets, compute_journal_impact, is_msc,
    major_subject, resolve_publication_date, split_citations, ArticleSeries, CitationSplit,
    Corpus, IngestConfig, IngestStats, JournalImpact, SubsetKey,
};
pub use records::{read_jsonl, write_jsonl, PreprintRecord, PublicationRecord, ReferenceRecord};
