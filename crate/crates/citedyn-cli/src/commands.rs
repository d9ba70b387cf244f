//! The four pipeline stages behind the subcommands, sharing one output
//! directory. Each stage reads the previous stage's files, writes its
//! own, and records what it produced in `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use citedyn::inference::{sample_posterior, summarize, PosteriorDraws, SubsetLabel};
use citedyn::ingest::{
    assemble_corpus, build_subsets, read_jsonl, write_jsonl, Corpus, JournalImpact,
    PreprintRecord, PublicationRecord, ReferenceRecord,
};
use citedyn::likelihood::SubsetData;
use citedyn::report::{
    aggregate_by, journal_table, posterior_predictive, GroupBy, GroupSummary, JournalResultRow,
};
use citedyn::simulate::{export_corpus, simulate_journal, SimulatedArticle};
use citedyn::stats::derive_seed;
use citedyn::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Seed namespaces, one per stage, so that streams never collide across
/// stages that share the run seed.
const STAGE_SIMULATE: u64 = 1;
const STAGE_FIT: u64 = 2;
const STAGE_REPORT: u64 = 3;

fn stage_seed(root: u64, stage: u64, stream: u64) -> u64 {
    derive_seed(derive_seed(root, stage), stream)
}

/// One fitting subset with its label, as stored in `subsets.json`.
/// (A JSON object cannot be keyed by a composite label, so the map from
/// ingest is flattened into a list.)
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetRecord {
    /// Major subject of the preprints.
    pub field: String,
    /// Publication year.
    pub year: i32,
    /// The articles, grouped by journal.
    pub data: SubsetData,
}

/// Bundle of per-field and per-year aggregates written by `report`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregates {
    /// One row per major subject.
    pub by_field: Vec<GroupSummary>,
    /// One row per publication year.
    pub by_year: Vec<GroupSummary>,
}

// ---------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------

/// Generate the configured synthetic journals and export them in the
/// same record formats `ingest` consumes, plus the ground truth.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<()> {
    let sim = config.simulate.as_ref().ok_or_else(|| {
        Error::input("the configuration has no [simulate] section; nothing to generate")
    })?;
    sim.validate()?;

    let mut articles: Vec<SimulatedArticle> = Vec::new();
    for (index, journal) in sim.journals.iter().enumerate() {
        let seed = stage_seed(config.seed, STAGE_SIMULATE, index as u64);
        articles.extend(simulate_journal(
            journal,
            config.m,
            &config.priors,
            sim.preprint_date,
            seed,
        )?);
    }
    let (preprints, publications, references) = export_corpus(&articles, &sim.subject);

    write_jsonl(&out.join("preprints.jsonl"), &preprints)?;
    write_jsonl(&out.join("publications.jsonl"), &publications)?;
    write_jsonl(&out.join("references.jsonl"), &references)?;
    write_json(&out.join("truth.json"), &articles)?;

    update_manifest(
        out,
        "simulate",
        serde_json::json!({
            "files": ["preprints.jsonl", "publications.jsonl", "references.jsonl", "truth.json"],
            "n_journals": sim.journals.len(),
            "n_articles": articles.len(),
            "n_references": references.len(),
            "seed": config.seed,
        }),
    )?;

    println!(
        "simulate: {} articles across {} journals, {} citing references -> {}",
        articles.len(),
        sim.journals.len(),
        references.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------

/// Assemble harvest records into fitting subsets and journal impacts.
pub fn cmd_ingest(
    config: &RunConfig,
    out: &Path,
    preprints: Option<PathBuf>,
    publications: Option<PathBuf>,
    references: Option<PathBuf>,
) -> Result<()> {
    let ingest_config = config.ingest.as_ref().ok_or_else(|| {
        Error::input("the configuration has no [ingest] section; set at least db_end")
    })?;

    let preprints_path = preprints.unwrap_or_else(|| out.join("preprints.jsonl"));
    let publications_path = publications.unwrap_or_else(|| out.join("publications.jsonl"));
    let references_path = references.unwrap_or_else(|| out.join("references.jsonl"));
    for (label, path, flag) in [
        ("preprint", &preprints_path, "--preprints"),
        ("publication", &publications_path, "--publications"),
        ("reference", &references_path, "--references"),
    ] {
        if !path.exists() {
            return Err(Error::input(format!(
                "no {label} records at {}; pass {flag} or run `citedyn simulate` first",
                path.display()
            )));
        }
    }

    let preprint_records: Vec<PreprintRecord> = read_jsonl(&preprints_path)?;
    let publication_records: Vec<PublicationRecord> = read_jsonl(&publications_path)?;
    let reference_records: Vec<ReferenceRecord> = read_jsonl(&references_path)?;

    let corpus: Corpus = assemble_corpus(
        &preprint_records,
        &publication_records,
        &reference_records,
        ingest_config,
    )?;
    let subsets = build_subsets(&corpus, ingest_config);
    let records: Vec<SubsetRecord> = subsets
        .into_iter()
        .map(|(key, data)| SubsetRecord {
            field: key.field,
            year: key.year,
            data,
        })
        .collect();

    write_json(&out.join("subsets.json"), &records)?;
    write_json(&out.join("impacts.json"), &corpus.impacts)?;
    write_json(&out.join("stats.json"), &corpus.stats)?;
    write_impact_csv(&out.join("impact.csv"), &corpus.impacts)?;

    update_manifest(
        out,
        "ingest",
        serde_json::json!({
            "files": ["subsets.json", "impacts.json", "impact.csv", "stats.json"],
            "n_subsets": records.len(),
            "n_linked_articles": corpus.stats.n_linked,
            "n_journals_with_impact": corpus.impacts.len(),
        }),
    )?;

    let stats = corpus.stats;
    println!(
        "ingest: {} preprints, {} linked to publications ({} unlinked, {} duplicate links, {} date conflicts)",
        stats.n_preprints, stats.n_linked, stats.n_unlinked, stats.n_duplicate_links, stats.n_date_conflicts
    );
    println!(
        "ingest: {} citations matched, {} unmatched, {} anomalous, {} beyond the horizon",
        stats.n_citations_matched,
        stats.n_citations_unmatched,
        stats.n_citation_anomalies,
        stats.n_citations_beyond_horizon
    );
    println!(
        "ingest: {} fitting subsets, {} journals with impact -> {}",
        records.len(),
        corpus.impacts.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------

/// Sample the posterior for every subset that passes the filters,
/// skipping subsets whose summary already exists so interrupted runs
/// resume where they stopped.
pub fn cmd_fit(config: &RunConfig, out: &Path) -> Result<()> {
    let records = load_subsets(out)?;
    let summaries_dir = out.join("summaries");
    let draws_dir = out.join("draws");
    create_dir(&summaries_dir)?;
    create_dir(&draws_dir)?;

    let mut fitted = 0usize;
    let mut skipped = 0usize;
    let mut written: Vec<String> = Vec::new();
    // The seed stream index follows the position in the full subset
    // list, so filtering subsets in or out never changes the chains of
    // the remaining ones.
    for (index, record) in records.iter().enumerate() {
        if !config.filters.keeps(&record.field, record.year) {
            continue;
        }
        let label = format!("{} ({})", record.field, record.year);
        let stem = subset_stem(&record.field, record.year);
        let summary_path = summaries_dir.join(format!("{stem}.json"));
        if summary_path.exists() {
            println!("fit: {label} already summarized, skipping");
            skipped += 1;
            continue;
        }

        let mut chain_config = config.chains.clone();
        chain_config.seed = stage_seed(config.seed, STAGE_FIT, index as u64);
        let draws = sample_posterior(&record.data, &config.priors, &chain_config, config.m)?;
        draws.write_csv(&draws_dir.join(format!("{stem}.csv")))?;

        let mut summary = summarize(&draws);
        summary.subset = Some(SubsetLabel {
            field: record.field.clone(),
            year: record.year,
        });
        write_json(&summary_path, &summary)?;
        written.push(format!("summaries/{stem}.json"));
        fitted += 1;

        let mut notes = String::new();
        if summary.excluded {
            notes.push_str(", excluded from aggregates");
        }
        if summary.rhat_warning {
            notes.push_str(", R-hat above 1.01");
        }
        println!(
            "fit: {label} — {} draws, {} divergent{notes}",
            summary.n_draws, summary.divergence_count
        );
    }

    update_manifest(
        out,
        "fit",
        serde_json::json!({
            "files": written,
            "n_fitted": fitted,
            "n_skipped": skipped,
            "seed": config.seed,
        }),
    )?;

    println!("fit: {fitted} subsets fitted, {skipped} already done -> {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------
// report
// ---------------------------------------------------------------------

/// Join summaries with impacts into the journal table, aggregate by
/// field and year, and draw predictive bands for requested articles.
pub fn cmd_report(config: &RunConfig, out: &Path, articles: &[String]) -> Result<()> {
    let records = load_subsets(out)?;
    let impacts_path = out.join("impacts.json");
    let impacts: BTreeMap<String, JournalImpact> = if impacts_path.exists() {
        read_json(&impacts_path)?
    } else {
        BTreeMap::new()
    };

    let summaries_dir = out.join("summaries");
    let mut summaries = Vec::new();
    for record in &records {
        if !config.filters.keeps(&record.field, record.year) {
            continue;
        }
        let path = summaries_dir.join(format!("{}.json", subset_stem(&record.field, record.year)));
        if path.exists() {
            summaries.push(read_json(&path)?);
        }
    }
    if summaries.is_empty() {
        return Err(Error::input(format!(
            "no fit summaries under {}; run `citedyn fit` first",
            summaries_dir.display()
        )));
    }

    let rows = journal_table(&summaries, &impacts);
    let aggregates = Aggregates {
        by_field: aggregate_by(&rows, GroupBy::Field),
        by_year: aggregate_by(&rows, GroupBy::Year),
    };
    write_json(&out.join("journal_table.json"), &rows)?;
    write_journal_csv(&out.join("journal_table.csv"), &rows)?;
    write_json(&out.join("aggregates.json"), &aggregates)?;
    println!(
        "report: {} journal rows from {} summaries ({} aggregate fields, {} years)",
        rows.len(),
        summaries.len(),
        aggregates.by_field.len(),
        aggregates.by_year.len()
    );

    let mut band_files: Vec<String> = Vec::new();
    if !articles.is_empty() {
        create_dir(&out.join("predictive"))?;
    }
    for article_id in articles {
        let file = predictive_band(config, out, &records, article_id)?;
        band_files.push(file);
    }

    update_manifest(
        out,
        "report",
        serde_json::json!({
            "files": ["journal_table.json", "journal_table.csv", "aggregates.json"],
            "predictive": band_files,
            "n_rows": rows.len(),
            "n_summaries": summaries.len(),
        }),
    )?;
    Ok(())
}

/// Draw the posterior-predictive band for one article and write it as a
/// per-day CSV. Returns the file name relative to the output directory.
fn predictive_band(
    config: &RunConfig,
    out: &Path,
    records: &[SubsetRecord],
    article_id: &str,
) -> Result<String> {
    // An article can sit in several subsets (one per major subject);
    // use the first one that has sampled draws on disk.
    let mut in_corpus = false;
    for record in records {
        let has_article = record
            .data
            .journals
            .iter()
            .any(|j| j.articles.iter().any(|a| a.article_id == article_id));
        if !has_article {
            continue;
        }
        in_corpus = true;
        let stem = subset_stem(&record.field, record.year);
        let draws_path = out.join("draws").join(format!("{stem}.csv"));
        if !draws_path.exists() {
            continue;
        }
        let draws = PosteriorDraws::read_csv(&draws_path)?;
        // Seeded by a hash of the identifier, so the band for one
        // article does not depend on which other articles were asked for.
        let seed = stage_seed(config.seed, STAGE_REPORT, fnv1a(article_id.as_bytes()));
        let band = posterior_predictive(
            &draws,
            &record.data,
            article_id,
            config.m,
            config.report.predictive_samples,
            seed,
        )?;

        let file = format!("predictive/{}.csv", slug(article_id));
        let path = out.join(&file);
        let mut writer = csv_writer(&path)?;
        write_record(
            &mut writer,
            &path,
            ["day", "lower", "median", "upper", "observed"],
        )?;
        for (i, day) in band.days.iter().enumerate() {
            let observed = band
                .observed
                .as_ref()
                .map(|counts| counts[i].to_string())
                .unwrap_or_default();
            write_record(
                &mut writer,
                &path,
                [
                    day.to_string(),
                    band.lower[i].to_string(),
                    band.median[i].to_string(),
                    band.upper[i].to_string(),
                    observed,
                ],
            )?;
        }
        finish_csv(writer, &path)?;

        let coverage = match band.covers_observed_total() {
            Some(true) => "inside the 95% band",
            Some(false) => "OUTSIDE the 95% band",
            None => "unobserved",
        };
        println!(
            "report: predictive band for {article_id} ({} samples, journal {}), observed total {coverage} -> {file}",
            config.report.predictive_samples, band.journal_id
        );
        return Ok(file);
    }

    if in_corpus {
        Err(Error::input(format!(
            "article {article_id} has no sampled draws; run `citedyn fit` first"
        )))
    } else {
        Err(Error::input(format!(
            "article {article_id} appears in no fitting subset"
        )))
    }
}

// ---------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------

fn load_subsets(out: &Path) -> Result<Vec<SubsetRecord>> {
    let path = out.join("subsets.json");
    if !path.exists() {
        return Err(Error::input(format!(
            "no subsets at {}; run `citedyn ingest` first",
            path.display()
        )));
    }
    read_json(&path)
}

/// File stem for one subset: `<field-slug>-<year>`.
fn subset_stem(field: &str, year: i32) -> String {
    format!("{}-{year}", slug(field))
}

/// Lowercase, alphanumeric-and-dash file name for an arbitrary label.
pub fn slug(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_dash = false;
    for ch in raw.chars() {
        if ch.is_ascii_alphanumeric() {
            if pending_dash && !out.is_empty() {
                out.push('-');
            }
            out.push(ch.to_ascii_lowercase());
            pending_dash = false;
        } else {
            pending_dash = true;
        }
    }
    if out.is_empty() {
        "unnamed".to_string()
    } else {
        out
    }
}

/// FNV-1a, for order-independent per-article seed streams.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Write a value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a JSON file into a value.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_record<W, I, S>(writer: &mut csv::Writer<W>, path: &Path, record: I) -> Result<()>
where
    W: std::io::Write,
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    writer.write_record(record).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

fn finish_csv<W: std::io::Write>(writer: csv::Writer<W>, path: &Path) -> Result<()> {
    writer.into_inner().map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(())
}

/// Journal impacts as CSV, highest impact first.
fn write_impact_csv(path: &Path, impacts: &BTreeMap<String, JournalImpact>) -> Result<()> {
    let mut rows: Vec<(&String, &JournalImpact)> = impacts.iter().collect();
    rows.sort_by(|a, b| {
        b.1.mean_citations
            .total_cmp(&a.1.mean_citations)
            .then_with(|| a.0.cmp(b.0))
    });
    let mut writer = csv_writer(path)?;
    write_record(&mut writer, path, ["journal_id", "mean_citations", "n_documents"])?;
    for (journal_id, impact) in rows {
        write_record(
            &mut writer,
            path,
            [
                journal_id.clone(),
                impact.mean_citations.to_string(),
                impact.n_documents.to_string(),
            ],
        )?;
    }
    finish_csv(writer, path)
}

/// The journal table as CSV, mirroring `journal_table.json` row for row.
fn write_journal_csv(path: &Path, rows: &[JournalResultRow]) -> Result<()> {
    let mut writer = csv_writer(path)?;
    write_record(
        &mut writer,
        path,
        [
            "journal_id",
            "field",
            "year",
            "impact",
            "multiplier_median",
            "multiplier_lower",
            "multiplier_upper",
            "rate_median",
            "rate_lower",
            "rate_upper",
            "spread_median",
            "spread_lower",
            "spread_upper",
            "effective_rate",
        ],
    )?;
    for row in rows {
        let (field, year) = row
            .subset
            .as_ref()
            .map(|s| (s.field.clone(), s.year.to_string()))
            .unwrap_or_default();
        write_record(
            &mut writer,
            path,
            [
                row.journal_id.clone(),
                field,
                year,
                row.impact.map(|v| v.to_string()).unwrap_or_default(),
                row.multiplier.median.to_string(),
                row.multiplier.lower.to_string(),
                row.multiplier.upper.to_string(),
                row.rate.median.to_string(),
                row.rate.lower.to_string(),
                row.rate.upper.to_string(),
                row.spread.median.to_string(),
                row.spread.lower.to_string(),
                row.spread.upper.to_string(),
                row.effective_rate.to_string(),
            ],
        )?;
    }
    finish_csv(writer, path)
}

/// Merge one stage's entry into `manifest.json`. The manifest maps stage
/// names to what the stage wrote; keys are sorted, contents carry no
/// timestamps, so reruns are byte-identical.
fn update_manifest(out: &Path, stage: &str, entry: serde_json::Value) -> Result<()> {
    let path = out.join("manifest.json");
    let mut manifest: BTreeMap<String, serde_json::Value> = if path.exists() {
        read_json(&path)?
    } else {
        BTreeMap::new()
    };
    manifest.insert(stage.to_string(), entry);
    write_json(&path, &manifest)
}
