//! From raw records to fit-ready subsets: date resolution, subject
//! assignment, citation splitting, journal impact, corpus assembly, and
//! subset construction.
//!
//! The stages are exposed individually (each is independently testable
//! against hand-computed oracles) and composed by [`assemble_corpus`] and
//! [`build_subsets`]. Everything is deterministic: grouping uses ordered
//! maps, ties break on identifiers, and input order never changes the
//! result beyond documented first-record-wins duplicate handling.

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, NaiveDate};
use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::extract::{extract_arxiv_id, extract_doi};
use super::records::{PreprintRecord, PublicationRecord, ReferenceRecord};
use crate::error::{Error, Result};
use crate::likelihood::{ArticleData, JournalData, SubsetData};
use crate::trajectory::{CitationEvent, CitationTrajectory};

/// Thresholds and windows of the preparation pipeline.
///
/// The defaults mirror the reference analysis: major subjects kept at
/// ≥ 1000 preprints, journals kept at ≥ 20 qualifying articles per
/// subset, articles qualify with preprint durations of at least 30 days,
/// five-year impact windows, and publication years 2000–2016.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Last day covered by the citation database (inclusive); every
    /// article's observation horizon.
    pub db_end: NaiveDate,
    /// Minimum number of preprints a major subject needs to be retained.
    #[serde(default = "default_subject_threshold")]
    pub subject_threshold: usize,
    /// Minimum qualifying articles a journal needs in a subset.
    #[serde(default = "default_min_articles")]
    pub min_articles: usize,
    /// Minimum preprint duration `T′` (days) for an article to be fit.
    #[serde(default = "default_min_duration_days")]
    pub min_duration_days: u32,
    /// Impact window length in 365-day years.
    #[serde(default = "default_impact_window_years")]
    pub impact_window_years: u32,
    /// Publication years retained for subsets, inclusive on both ends.
    #[serde(default = "default_year_range")]
    pub year_range: (i32, i32),
}

fn default_subject_threshold() -> usize {
    1000
}

fn default_min_articles() -> usize {
    20
}

fn default_min_duration_days() -> u32 {
    30
}

fn default_impact_window_years() -> u32 {
    5
}

fn default_year_range() -> (i32, i32) {
    (2000, 2016)
}

impl IngestConfig {
    /// Configuration with the reference thresholds and the given database
    /// end.
    pub fn new(db_end: NaiveDate) -> Self {
        IngestConfig {
            db_end,
            subject_threshold: default_subject_threshold(),
            min_articles: default_min_articles(),
            min_duration_days: default_min_duration_days(),
            impact_window_years: default_impact_window_years(),
            year_range: default_year_range(),
        }
    }

    /// Check the configuration invariants.
    pub fn validate(&self) -> Result<()> {
        if self.subject_threshold == 0 {
            return Err(Error::input("subject threshold must be at least 1"));
        }
        if self.min_articles == 0 {
            return Err(Error::input("per-journal article minimum must be at least 1"));
        }
        if self.impact_window_years == 0 {
            return Err(Error::input("impact window must be at least one year"));
        }
        if self.year_range.0 > self.year_range.1 {
            return Err(Error::input(format!(
                "publication year range is empty: {}–{}",
                self.year_range.0, self.year_range.1
            )));
        }
        Ok(())
    }
}

/// Resolve a publication's date: the earliest of its online, print,
/// created, and issued dates.
pub fn resolve_publication_date(rec: &PublicationRecord) -> Result<NaiveDate> {
    [rec.published_online, rec.published_print, rec.created, rec.issued]
        .into_iter()
        .flatten()
        .min()
        .ok_or_else(|| Error::input(format!("publication {} carries no usable date", rec.doi)))
}

/// Mathematical-classification codes masquerading as subjects: two
/// digits, an uppercase letter or dash, two more digits/`x`/dashes
/// (e.g. `05C50`, `35Q30`, `05-xx`).
static MSC_CODE: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[0-9]{2}[A-Z-][0-9x-]{2}").unwrap());

/// Major part of a raw `"Major - Minor"` subject string; strings without
/// the separator are already major subjects.
pub fn major_subject(raw: &str) -> &str {
    raw.split(" - ").next().unwrap_or(raw).trim()
}

/// True when a subject token is a mathematical classification code or an
/// explicit classification label rather than a repository subject.
pub fn is_msc(subject: &str) -> bool {
    MSC_CODE.is_match(subject) || subject.starts_with("MSC")
}

/// Retained major subjects for each preprint, aligned with the input
/// slice.
///
/// A subject string contributes its major part; classification codes are
/// dropped, each preprint counts at most once per major subject, and only
/// subjects used by at least `threshold` preprints are retained. A
/// preprint may end up with zero subjects, which excludes it from every
/// subset downstream.
pub fn assign_subjects(preprints: &[PreprintRecord], threshold: usize) -> Vec<Vec<String>> {
    let per_preprint: Vec<Vec<&str>> = preprints
        .iter()
        .map(|p| {
            let mut majors: Vec<&str> = Vec::new();
            for raw in &p.subjects {
                let major = major_subject(raw);
                if !major.is_empty() && !is_msc(major) && !majors.contains(&major) {
                    majors.push(major);
                }
            }
            majors
        })
        .collect();

    let mut preprints_using: HashMap<&str, usize> = HashMap::new();
    for majors in &per_preprint {
        for &major in majors {
            *preprints_using.entry(major).or_insert(0) += 1;
        }
    }

    per_preprint
        .into_iter()
        .map(|majors| {
            majors
                .into_iter()
                .filter(|major| preprints_using[major] >= threshold)
                .map(String::from)
                .collect()
        })
        .collect()
}

/// Three-way partition of one article's dated citations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CitationSplit {
    /// On or before the publication day, the boundary day included.
    pub pre: Vec<NaiveDate>,
    /// Strictly after the publication day.
    pub post: Vec<NaiveDate>,
    /// Dated before the preprint was posted: impossible under the data
    /// model, so kept out of both sets and surfaced to the caller.
    pub anomalies: Vec<NaiveDate>,
}

/// Split dated citations around the publication day. Always a partition:
/// `pre + post + anomalies` covers every input date exactly once.
pub fn split_citations(
    dates: &[NaiveDate],
    preprint_date: NaiveDate,
    publication_date: NaiveDate,
) -> CitationSplit {
    let mut split = CitationSplit::default();
    for &date in dates {
        if date < preprint_date {
            split.anomalies.push(date);
        } else if date <= publication_date {
            split.pre.push(date);
        } else {
            split.post.push(date);
        }
    }
    split
}

/// Average early citation impact of one journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalImpact {
    /// Mean citations received by the journal's articles and reviews
    /// within the impact window.
    pub mean_citations: f64,
    /// Number of qualifying documents behind the mean.
    pub n_documents: usize,
}

/// Per-journal impact: the mean number of citations received within the
/// half-open window `[publication, publication + years·365 days)` over
/// all documents of type `article` or `review`, citations truncated at
/// the database end for recently published documents.
///
/// `citations` are `(cited DOI, citing date)` pairs. Documents that never
/// get cited still count toward the mean with zero citations; documents
/// without any resolvable date cannot define a window and are skipped;
/// journals with no qualifying documents are absent from the result.
pub fn compute_journal_impact(
    publications: &[PublicationRecord],
    citations: &[(String, NaiveDate)],
    window_years: u32,
    db_end: NaiveDate,
) -> BTreeMap<String, JournalImpact> {
    let mut window_start: HashMap<&str, NaiveDate> = HashMap::new();
    let mut journal_of: HashMap<&str, &str> = HashMap::new();
    for publication in publications {
        let qualifying = publication.kind.eq_ignore_ascii_case("article")
            || publication.kind.eq_ignore_ascii_case("review");
        if !qualifying {
            continue;
        }
        let Ok(date) = resolve_publication_date(publication) else {
            continue;
        };
        // First record wins on duplicate DOIs.
        window_start.entry(publication.doi.as_str()).or_insert(date);
        journal_of
            .entry(publication.doi.as_str())
            .or_insert(publication.journal.as_str());
    }

    let window_days = u64::from(window_years) * 365;
    let mut in_window: HashMap<&str, u64> = HashMap::new();
    for (doi, date) in citations {
        let Some((&key, &start)) = window_start.get_key_value(doi.as_str()) else {
            continue;
        };
        let end = start + chrono::Days::new(window_days);
        if *date >= start && *date < end && *date <= db_end {
            *in_window.entry(key).or_insert(0) += 1;
        }
    }

    let mut totals: BTreeMap<&str, (u64, usize)> = BTreeMap::new();
    for (&doi, _) in &window_start {
        let entry = totals.entry(journal_of[doi]).or_insert((0, 0));
        entry.0 += in_window.get(doi).copied().unwrap_or(0);
        entry.1 += 1;
    }
    totals
        .into_iter()
        .map(|(journal, (cited, n))| {
            (
                journal.to_string(),
                JournalImpact {
                    mean_citations: cited as f64 / n as f64,
                    n_documents: n,
                },
            )
        })
        .collect()
}

/// One preprint linked to its published version, with the merged
/// citation history of both versions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleSeries {
    /// Repository identifier of the preprint.
    pub arxiv_id: String,
    /// DOI of the published version.
    pub doi: String,
    /// Journal the article was published in.
    pub journal: String,
    /// Retained major subjects; empty means the article joins no subset.
    pub subjects: Vec<String>,
    /// Citation history from posting to the database end.
    pub trajectory: CitationTrajectory,
}

/// Counters from one assembly pass, for reporting and sanity checks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    /// Preprint records read.
    pub n_preprints: usize,
    /// Publication records read.
    pub n_publications: usize,
    /// Reference records read.
    pub n_references: usize,
    /// Preprints linked to a dated publication inside the database window.
    pub n_linked: usize,
    /// Preprints without a DOI, without a matching publication record, or
    /// matching an undatable publication.
    pub n_unlinked: usize,
    /// Preprints sharing an identifier or DOI with an earlier record;
    /// only the first record is kept.
    pub n_duplicate_links: usize,
    /// Linked publications whose resolved date precedes the preprint
    /// posting or falls beyond the database end; excluded from the corpus.
    pub n_date_conflicts: usize,
    /// References attributed to a linked article by either identifier.
    pub n_citations_matched: usize,
    /// References citing no linked article (prose-only strings included).
    pub n_citations_unmatched: usize,
    /// Citations dated before the preprint posting: logged here and kept
    /// out of the trajectories.
    pub n_citation_anomalies: usize,
    /// Citations dated after the database end, outside every horizon.
    pub n_citations_beyond_horizon: usize,
}

/// A fully prepared corpus: linked articles with their citation
/// trajectories, per-journal impacts, and assembly counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    /// Linked preprint–publication pairs.
    pub articles: Vec<ArticleSeries>,
    /// Impact per journal, over all qualifying publications (not only
    /// those linked to a preprint).
    pub impacts: BTreeMap<String, JournalImpact>,
    /// Assembly counters.
    pub stats: IngestStats,
}

/// Link preprints to publications and attach citations.
///
/// A preprint joins the corpus when its DOI matches a publication whose
/// resolved date lies between the posting date and the database end.
/// References are attributed to a linked article by its repository
/// identifier first, then by its DOI — a citation by either identifier
/// counts, and the pre/post split is purely by date. Citations dated
/// before the posting day are anomalies (counted, excluded); citations
/// after the database end are outside every horizon (counted, excluded).
/// Journal impact is computed from all DOI-dated citations against all
/// qualifying publications.
pub fn assemble_corpus(
    preprints: &[PreprintRecord],
    publications: &[PublicationRecord],
    references: &[ReferenceRecord],
    config: &IngestConfig,
) -> Result<Corpus> {
    config.validate()?;
    let subjects = assign_subjects(preprints, config.subject_threshold);

    let mut publication_by_doi: HashMap<&str, &PublicationRecord> = HashMap::new();
    for publication in publications {
        publication_by_doi
            .entry(publication.doi.as_str())
            .or_insert(publication);
    }

    let mut stats = IngestStats {
        n_preprints: preprints.len(),
        n_publications: publications.len(),
        n_references: references.len(),
        ..IngestStats::default()
    };

    // One draft per linked article: preprint index, publication date,
    // journal. Identifier indexes point into the draft list.
    let mut drafts: Vec<(usize, NaiveDate, &str)> = Vec::new();
    let mut slot_by_arxiv: HashMap<&str, usize> = HashMap::new();
    let mut slot_by_doi: HashMap<&str, usize> = HashMap::new();
    for (index, preprint) in preprints.iter().enumerate() {
        let Some(doi) = preprint.doi.as_deref() else {
            stats.n_unlinked += 1;
            continue;
        };
        let Some(publication) = publication_by_doi.get(doi) else {
            stats.n_unlinked += 1;
            continue;
        };
        let Ok(publication_date) = resolve_publication_date(publication) else {
            stats.n_unlinked += 1;
            continue;
        };
        if publication_date < preprint.date || publication_date > config.db_end {
            stats.n_date_conflicts += 1;
            continue;
        }
        if slot_by_arxiv.contains_key(preprint.arxiv_id.as_str()) || slot_by_doi.contains_key(doi)
        {
            stats.n_duplicate_links += 1;
            continue;
        }
        let slot = drafts.len();
        drafts.push((index, publication_date, publication.journal.as_str()));
        slot_by_arxiv.insert(preprint.arxiv_id.as_str(), slot);
        slot_by_doi.insert(doi, slot);
    }

    // Attribute references: repository identifier first, DOI second. All
    // DOI-dated references additionally feed the impact computation.
    let mut dates_per_slot: Vec<Vec<NaiveDate>> = vec![Vec::new(); drafts.len()];
    let mut doi_citations: Vec<(String, NaiveDate)> = Vec::new();
    for reference in references {
        let arxiv_id = extract_arxiv_id(reference);
        let doi = extract_doi(reference);
        if let Some(doi) = &doi {
            doi_citations.push((doi.clone(), reference.date));
        }
        let slot = arxiv_id
            .as_deref()
            .and_then(|id| slot_by_arxiv.get(id))
            .or_else(|| doi.as_deref().and_then(|d| slot_by_doi.get(d)));
        match slot {
            Some(&slot) => {
                stats.n_citations_matched += 1;
                dates_per_slot[slot].push(reference.date);
            }
            None => stats.n_citations_unmatched += 1,
        }
    }

    let mut articles = Vec::with_capacity(drafts.len());
    for (slot, &(index, publication_date, journal)) in drafts.iter().enumerate() {
        let preprint = &preprints[index];
        let mut dates = std::mem::take(&mut dates_per_slot[slot]);
        dates.retain(|&date| {
            if date > config.db_end {
                stats.n_citations_beyond_horizon += 1;
                false
            } else {
                true
            }
        });
        let split = split_citations(&dates, preprint.date, publication_date);
        stats.n_citation_anomalies += split.anomalies.len();

        let mut per_day: BTreeMap<u32, u32> = BTreeMap::new();
        for date in split.pre.iter().chain(split.post.iter()) {
            let day = (*date - preprint.date).num_days() as u32;
            *per_day.entry(day).or_insert(0) += 1;
        }
        let events: Vec<CitationEvent> = per_day
            .into_iter()
            .map(|(day, count)| CitationEvent { day, count })
            .collect();
        let trajectory =
            CitationTrajectory::new(preprint.date, publication_date, config.db_end, events)?;
        articles.push(ArticleSeries {
            arxiv_id: preprint.arxiv_id.clone(),
            doi: preprint.doi.clone().expect("linked preprints carry a DOI"),
            journal: journal.to_string(),
            subjects: subjects[index].clone(),
            trajectory,
        });
    }
    stats.n_linked = articles.len();

    let impacts = compute_journal_impact(
        publications,
        &doi_citations,
        config.impact_window_years,
        config.db_end,
    );

    Ok(Corpus {
        articles,
        impacts,
        stats,
    })
}

/// One unit of analysis: a field and a publication year.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubsetKey {
    /// Major subject of the preprint.
    pub field: String,
    /// Publication year of the published version.
    pub year: i32,
}

impl std::fmt::Display for SubsetKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.field, self.year)
    }
}

/// Group a corpus into fit-ready subsets per (field, publication year).
///
/// Only articles published at least `min_duration_days` after posting
/// participate — shorter ones neither count toward journal thresholds nor
/// appear in the data. Within a subset, journals need `min_articles`
/// qualifying articles; articles with several subjects appear in each
/// matching field's subset. Journals and articles are ordered by
/// identifier, so the result is independent of input order.
pub fn build_subsets(corpus: &Corpus, config: &IngestConfig) -> BTreeMap<SubsetKey, SubsetData> {
    let mut grouped: BTreeMap<SubsetKey, BTreeMap<&str, Vec<&ArticleSeries>>> = BTreeMap::new();
    for article in &corpus.articles {
        if article.trajectory.preprint_duration() < config.min_duration_days {
            continue;
        }
        let year = article.trajectory.publication_date.year();
        if year < config.year_range.0 || year > config.year_range.1 {
            continue;
        }
        for field in &article.subjects {
            grouped
                .entry(SubsetKey {
                    field: field.clone(),
                    year,
                })
                .or_default()
                .entry(article.journal.as_str())
                .or_default()
                .push(article);
        }
    }

    let mut subsets = BTreeMap::new();
    for (key, journals) in grouped {
        let kept: Vec<JournalData> = journals
            .into_iter()
            .filter(|(_, articles)| articles.len() >= config.min_articles)
            .map(|(journal, mut articles)| {
                articles.sort_by(|a, b| a.arxiv_id.cmp(&b.arxiv_id));
                JournalData {
                    journal_id: journal.to_string(),
                    articles: articles
                        .iter()
                        .map(|a| ArticleData::from_trajectory(a.arxiv_id.clone(), &a.trajectory))
                        .collect(),
                }
            })
            .collect();
        if !kept.is_empty() {
            subsets.insert(key, SubsetData { journals: kept });
        }
    }
    subsets
}
