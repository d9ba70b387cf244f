//! Posterior-predictive trajectories and journal-level result tables.
//!
//! Everything here consumes finished fits: sampled draws feed per-article
//! predictive bands, and per-subset summaries join with journal impacts
//! into result rows and field/year aggregates. No function invents
//! numbers — rows are pure joins of their inputs, and predictive bands
//! come from re-running the forward model under sampled parameters.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{FitSummary, ParameterSummary, PosteriorDraws, SubsetLabel};
use crate::ingest::JournalImpact;
use crate::likelihood::{ArticleData, SubsetData};
use crate::model::ArticleParams;
use crate::simulate::{default_preprint_date, simulate_trajectory_with};
use crate::stats::{derive_seed, quantile_sorted, quantiles};

/// Per-day predictive band and the sampled curves behind it for one
/// article.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorPredictive {
    /// The article the band belongs to.
    pub article_id: String,
    /// The journal whose multiplier entered the simulations.
    pub journal_id: String,
    /// Day offsets `0..=T`.
    pub days: Vec<u32>,
    /// 2.5th percentile of cumulative citations per day.
    pub lower: Vec<f64>,
    /// Median cumulative citations per day.
    pub median: Vec<f64>,
    /// 97.5th percentile of cumulative citations per day.
    pub upper: Vec<f64>,
    /// The sampled cumulative curves, one per predictive sample.
    pub samples: Vec<Vec<u64>>,
    /// Observed cumulative citations per day, when the article carries
    /// events.
    pub observed: Option<Vec<u64>>,
}

impl PosteriorPredictive {
    /// Whether the observed total at the horizon falls inside the 95%
    /// band; `None` for articles without observations.
    pub fn covers_observed_total(&self) -> Option<bool> {
        let observed = self.observed.as_ref()?;
        let last = *observed.last()? as f64;
        Some(*self.lower.last()? <= last && last <= *self.upper.last()?)
    }
}

fn cumulative_curve(events: &[crate::trajectory::CitationEvent], horizon: u32) -> Vec<u64> {
    let mut curve = vec![0u64; horizon as usize + 1];
    let mut total = 0u64;
    let mut next = events.iter().peekable();
    for (day, slot) in curve.iter_mut().enumerate() {
        while let Some(event) = next.peek() {
            if event.day as usize == day {
                total += event.count as u64;
                next.next();
            } else {
                break;
            }
        }
        *slot = total;
    }
    curve
}

/// Simulate an article's citation history under `n_samples` parameter
/// draws and band the cumulative counts per day.
///
/// Draw rows are picked uniformly (seeded, hence deterministic), and each
/// picked row re-runs the forward model over the article's own timeline
/// with its sampled rate, decay scale, and journal multiplier. Draws from
/// a subset with any post-warmup divergence are excluded by policy and
/// refused here.
pub fn posterior_predictive(
    draws: &PosteriorDraws,
    data: &SubsetData,
    article_id: &str,
    m: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PosteriorPredictive> {
    if n_samples == 0 {
        return Err(Error::input("need at least one predictive sample"));
    }
    let divergences = draws.divergence_count();
    if divergences > 0 {
        return Err(Error::input(format!(
            "subset excluded by the divergence policy: {divergences} divergent transitions"
        )));
    }

    let (journal_id, article): (&str, &ArticleData) = data
        .journals
        .iter()
        .find_map(|j| {
            j.articles
                .iter()
                .find(|a| a.article_id == article_id)
                .map(|a| (j.journal_id.as_str(), a))
        })
        .ok_or_else(|| Error::input(format!("article {article_id} is not in this subset")))?;

    let column = |name: String| {
        draws
            .column_index(&name)
            .ok_or_else(|| Error::input(format!("draws carry no column {name}")))
    };
    let phi_col = column(format!("phi[{article_id}]"))?;
    let beta_col = column(format!("beta[{article_id}]"))?;
    let theta_col = column(format!("theta[{journal_id}]"))?;

    let mut rows: Vec<(f64, f64, f64)> = Vec::with_capacity(draws.n_draws());
    for chain in &draws.chains {
        for row in &chain.draws {
            rows.push((row[phi_col], row[beta_col], row[theta_col]));
        }
    }
    if rows.is_empty() {
        return Err(Error::input("draws contain no kept iterations"));
    }

    let horizon = article.horizon;
    let mut picker = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let (phi, beta, theta) = rows[picker.gen_range(0..rows.len())];
        let params = ArticleParams::new(phi, beta, article.preprint_duration, horizon)?;
        let mut sim_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1 + k as u64));
        let trajectory =
            simulate_trajectory_with(&params, theta, m, default_preprint_date(), &mut sim_rng);
        samples.push(cumulative_curve(&trajectory.events, horizon));
    }

    let days: Vec<u32> = (0..=horizon).collect();
    let mut lower = Vec::with_capacity(days.len());
    let mut median = Vec::with_capacity(days.len());
    let mut upper = Vec::with_capacity(days.len());
    let mut at_day = vec![0.0f64; n_samples];
    for day in 0..days.len() {
        for (k, curve) in samples.iter().enumerate() {
            at_day[k] = curve[day] as f64;
        }
        let qs = quantiles(&at_day, &[0.025, 0.5, 0.975]);
        lower.push(qs[0]);
        median.push(qs[1]);
        upper.push(qs[2]);
    }

    let observed = article
        .events
        .as_ref()
        .map(|events| cumulative_curve(events, horizon));

    Ok(PosteriorPredictive {
        article_id: article_id.to_string(),
        journal_id: journal_id.to_string(),
        days,
        lower,
        median,
        upper,
        samples,
        observed,
    })
}

/// A posterior median with its central 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateInterval {
    /// Posterior median.
    pub median: f64,
    /// 2.5th percentile.
    pub lower: f64,
    /// 97.5th percentile.
    pub upper: f64,
}

impl From<&ParameterSummary> for EstimateInterval {
    fn from(summary: &ParameterSummary) -> Self {
        EstimateInterval {
            median: summary.median,
            lower: summary.lower,
            upper: summary.upper,
        }
    }
}

/// One journal's fitted quantities joined with its impact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalResultRow {
    /// Journal identifier.
    pub journal_id: String,
    /// The (field, year) subset the fit came from, when labelled.
    pub subset: Option<SubsetLabel>,
    /// Mean early citation impact; `None` when the journal has no
    /// qualifying documents.
    pub impact: Option<f64>,
    /// Citation multiplier θ.
    pub multiplier: EstimateInterval,
    /// Median latent citation rate e^Φ.
    pub rate: EstimateInterval,
    /// Spread of latent rates ε.
    pub spread: EstimateInterval,
    /// Post-publication rate e^Φ·θ.
    pub effective_rate: f64,
}

/// Join per-subset fit summaries with journal impacts into result rows,
/// sorted by impact (descending, journals without impact last, ties by
/// identifier).
///
/// Summaries excluded by the divergence policy contribute no rows. The
/// effective rate is the median of the per-draw product e^Φ·θ when the
/// summary carries it, and the product of the two medians otherwise.
pub fn journal_table(
    summaries: &[FitSummary],
    impacts: &BTreeMap<String, JournalImpact>,
) -> Vec<JournalResultRow> {
    let mut rows = Vec::new();
    for summary in summaries {
        if summary.excluded {
            continue;
        }
        for journal_id in summary.journal_ids() {
            let Some(multiplier) = summary.get(&format!("theta[{journal_id}]")) else {
                continue;
            };
            let Some(spread) = summary.get(&format!("epsilon[{journal_id}]")) else {
                continue;
            };
            let Some(rate) = summary.get(&format!("median_rate[{journal_id}]")) else {
                continue;
            };
            let effective_rate = summary
                .get(&format!("median_rate_published[{journal_id}]"))
                .map(|s| s.median)
                .unwrap_or(rate.median * multiplier.median);
            rows.push(JournalResultRow {
                journal_id: journal_id.clone(),
                subset: summary.subset.clone(),
                impact: impacts.get(&journal_id).map(|i| i.mean_citations),
                multiplier: multiplier.into(),
                rate: rate.into(),
                spread: spread.into(),
                effective_rate,
            });
        }
    }
    rows.sort_by(|a, b| {
        match (a.impact, b.impact) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then_with(|| a.journal_id.cmp(&b.journal_id))
        .then_with(|| {
            let label = |r: &JournalResultRow| {
                r.subset
                    .as_ref()
                    .map(|s| (s.field.clone(), s.year))
                    .unwrap_or_default()
            };
            label(a).cmp(&label(b))
        })
    });
    rows
}

/// What to group journal rows by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    /// Major subject of the subset.
    Field,
    /// Publication year of the subset.
    Year,
}

/// Distribution of journal-level medians within one field or year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    /// Field name or year.
    pub key: String,
    /// Number of journal rows aggregated (multi-subject journals count
    /// once per subset they appear in).
    pub n_rows: usize,
    /// Median and 95% spread of the journal median multipliers.
    pub multiplier: EstimateInterval,
    /// Median and 95% spread of the journal median rates.
    pub rate: EstimateInterval,
    /// Median and 95% spread of the journal median rate spreads.
    pub spread: EstimateInterval,
}

fn spread_of(values: &mut Vec<f64>) -> EstimateInterval {
    values.sort_by(f64::total_cmp);
    EstimateInterval {
        median: quantile_sorted(values, 0.5),
        lower: quantile_sorted(values, 0.025),
        upper: quantile_sorted(values, 0.975),
    }
}

/// Summarize journal rows per field or per year: the median and 95%
/// spread of the journal-level medians, every journal weighted equally.
/// Rows without a subset label carry no key and are skipped.
pub fn aggregate_by(rows: &[JournalResultRow], by: GroupBy) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<String, Vec<&JournalResultRow>> = BTreeMap::new();
    for row in rows {
        let Some(subset) = &row.subset else {
            continue;
        };
        let key = match by {
            GroupBy::Field => subset.field.clone(),
            GroupBy::Year => subset.year.to_string(),
        };
        groups.entry(key).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let mut multipliers: Vec<f64> = members.iter().map(|r| r.multiplier.median).collect();
            let mut rates: Vec<f64> = members.iter().map(|r| r.rate.median).collect();
            let mut spreads: Vec<f64> = members.iter().map(|r| r.spread.median).collect();
            GroupSummary {
                key,
                n_rows: members.len(),
                multiplier: spread_of(&mut multipliers),
                rate: spread_of(&mut rates),
                spread: spread_of(&mut spreads),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{ChainDraws, JournalColumns};
    use crate::likelihood::JournalData;
    use crate::model::expected_citations_exact;
    use crate::trajectory::CitationEvent;

    /// Draws in which every kept iteration carries the same parameter
    /// values — the predictive distribution then reduces to the forward
    /// model at those values.
    fn constant_draws(phi: f64, beta: f64, theta: f64, rows_per_chain: usize) -> PosteriorDraws {
        let row = vec![phi, beta, 0.0, 0.5, theta];
        let chain = |seed| ChainDraws {
            draws: vec![row.clone(); rows_per_chain],
            divergent: vec![false; rows_per_chain],
            accept_stat: vec![0.99; rows_per_chain],
            step_size: 0.1,
            seed,
        };
        PosteriorDraws {
            parameter_names: vec![
                "phi[a]".into(),
                "beta[a]".into(),
                "Phi[j]".into(),
                "epsilon[j]".into(),
                "theta[j]".into(),
            ],
            journal_columns: vec![JournalColumns {
                journal_id: "j".into(),
                location: 2,
                scale: 3,
                multiplier: 4,
            }],
            chains: vec![chain(1), chain(2)],
        }
    }

    fn subset_with_article(events: Option<Vec<CitationEvent>>) -> SubsetData {
        SubsetData {
            journals: vec![JournalData {
                journal_id: "j".into(),
                articles: vec![ArticleData {
                    article_id: "a".into(),
                    preprint_duration: 120,
                    horizon: 300,
                    events,
                }],
            }],
        }
    }

    #[test]
    fn bands_bracket_medians_and_track_the_exact_expectation() {
        let draws = constant_draws(1.0, 365.0, 2.0, 50);
        let data = subset_with_article(Some(vec![]));
        let n_samples = 400;
        let pp = posterior_predictive(&draws, &data, "a", 30.0, n_samples, 9).unwrap();

        assert_eq!(pp.days.len(), 301);
        assert_eq!(pp.samples.len(), n_samples);
        for day in 0..pp.days.len() {
            assert!(pp.lower[day] <= pp.median[day] && pp.median[day] <= pp.upper[day]);
            if day > 0 {
                assert!(pp.median[day] >= pp.median[day - 1], "cumulative medians decrease");
            }
        }

        // With constant parameter draws the sample mean of the final count
        // is a Monte Carlo estimate of the closed-form expectation.
        let article = ArticleParams::new(1.0, 365.0, 120, 300).unwrap();
        let exact = expected_citations_exact(300, &article, 2.0, 30.0);
        let finals: Vec<f64> = pp.samples.iter().map(|c| *c.last().unwrap() as f64).collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let var = crate::stats::sample_variance(&finals);
        let se = (var / finals.len() as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 4.0 * se,
            "mean {mean} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn single_sample_with_fixed_seed_is_deterministic() {
        let draws = constant_draws(0.8, 400.0, 1.5, 20);
        let data = subset_with_article(Some(vec![]));
        let one = posterior_predictive(&draws, &data, "a", 30.0, 1, 7).unwrap();
        let two = posterior_predictive(&draws, &data, "a", 30.0, 1, 7).unwrap();
        assert_eq!(one, two);
        // One sample collapses the band onto the curve itself.
        assert_eq!(one.lower, one.median);
        assert_eq!(one.median, one.upper);

        let other_seed = posterior_predictive(&draws, &data, "a", 30.0, 1, 8).unwrap();
        assert_ne!(one.samples, other_seed.samples);
    }

    #[test]
    fn observed_curve_accumulates_the_events() {
        let draws = constant_draws(1.0, 365.0, 2.0, 5);
        let data = subset_with_article(Some(vec![
            CitationEvent { day: 0, count: 2 },
            CitationEvent { day: 3, count: 1 },
        ]));
        let pp = posterior_predictive(&draws, &data, "a", 30.0, 2, 1).unwrap();
        let observed = pp.observed.as_ref().unwrap();
        assert_eq!(observed[0], 2);
        assert_eq!(observed[2], 2);
        assert_eq!(observed[3], 3);
        assert_eq!(observed[300], 3);
        assert!(pp.covers_observed_total().is_some());

        let unobserved = subset_with_article(None);
        let pp = posterior_predictive(&draws, &unobserved, "a", 30.0, 2, 1).unwrap();
        assert_eq!(pp.observed, None);
        assert_eq!(pp.covers_observed_total(), None);
    }

    #[test]
    fn unknown_articles_and_divergent_subsets_are_refused() {
        let draws = constant_draws(1.0, 365.0, 2.0, 5);
        let data = subset_with_article(Some(vec![]));
        assert!(posterior_predictive(&draws, &data, "missing", 30.0, 2, 1).is_err());
        assert!(posterior_predictive(&draws, &data, "a", 30.0, 0, 1).is_err());

        let mut tainted = draws.clone();
        tainted.chains[0].divergent[2] = true;
        let err = posterior_predictive(&tainted, &data, "a", 30.0, 2, 1).unwrap_err();
        assert!(err.to_string().contains("divergence policy"), "{err}");
    }

    fn interval(name: &str, median: f64, lower: f64, upper: f64) -> ParameterSummary {
        ParameterSummary {
            name: name.into(),
            median,
            lower,
            upper,
            rhat: None,
            ess: None,
        }
    }

    fn fixture_summary(journal: &str, theta: f64, rate: f64, field: &str, year: i32) -> FitSummary {
        FitSummary {
            subset: Some(SubsetLabel {
                field: field.into(),
                year,
            }),
            n_draws: 1000,
            parameters: vec![
                interval(&format!("theta[{journal}]"), theta, theta * 0.8, theta * 1.2),
                interval(&format!("epsilon[{journal}]"), 0.5, 0.4, 0.6),
            ],
            derived: vec![interval(
                &format!("median_rate[{journal}]"),
                rate,
                rate * 0.9,
                rate * 1.1,
            )],
            divergence_count: 0,
            excluded: false,
            rhat_warning: false,
        }
    }

    #[test]
    fn journal_rows_join_sort_and_derive() {
        // Medians from the reference analysis: a flagship review journal
        // with a large multiplier and a high impact, and a review journal
        // whose articles earn most citations while still preprints.
        let summaries = vec![
            fixture_summary("reviews-of-modern-physics", 11.0, 0.37, "Physics", 2010),
            fixture_summary("physics-reports", 1.3, 0.92, "Physics", 2010),
            fixture_summary("unindexed-journal", 2.0, 0.5, "Physics", 2010),
        ];
        let mut impacts = BTreeMap::new();
        impacts.insert(
            "reviews-of-modern-physics".to_string(),
            JournalImpact {
                mean_citations: 241.0,
                n_documents: 100,
            },
        );
        impacts.insert(
            "physics-reports".to_string(),
            JournalImpact {
                mean_citations: 76.0,
                n_documents: 100,
            },
        );

        let rows = journal_table(&summaries, &impacts);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].journal_id, "reviews-of-modern-physics");
        assert_eq!(rows[0].impact, Some(241.0));
        assert_eq!(rows[0].multiplier.median, 11.0);
        assert_eq!(rows[1].journal_id, "physics-reports");
        assert!((rows[1].effective_rate - 0.92 * 1.3).abs() < 1e-12);
        assert!((rows[1].effective_rate - 1.20).abs() < 0.005);
        // No impact sorts last, flagged absent rather than invented.
        assert_eq!(rows[2].journal_id, "unindexed-journal");
        assert_eq!(rows[2].impact, None);

        for row in &rows {
            assert!(row.multiplier.lower <= row.multiplier.median);
            assert!(row.multiplier.median <= row.multiplier.upper);
        }
    }

    #[test]
    fn excluded_summaries_contribute_no_rows() {
        let mut summary = fixture_summary("j", 2.0, 0.5, "Physics", 2010);
        summary.excluded = true;
        assert!(journal_table(&[summary], &BTreeMap::new()).is_empty());
    }

    #[test]
    fn per_draw_product_outranks_the_product_of_medians() {
        let mut summary = fixture_summary("j", 2.0, 0.5, "Physics", 2010);
        summary
            .derived
            .push(interval("median_rate_published[j]", 0.93, 0.8, 1.1));
        let rows = journal_table(&[summary], &BTreeMap::new());
        assert_eq!(rows[0].effective_rate, 0.93);
    }

    #[test]
    fn aggregation_partitions_rows_and_matches_a_recount() {
        let mut rows = Vec::new();
        let thetas = [1.0, 2.0, 3.0, 4.0, 10.0];
        for (k, theta) in thetas.iter().enumerate() {
            let field = if k < 3 { "F" } else { "G" };
            let year = 2010 + (k as i32) % 2;
            let summary = fixture_summary(&format!("j{k}"), *theta, 0.5, field, year);
            rows.extend(journal_table(&[summary], &BTreeMap::new()));
        }

        let by_field = aggregate_by(&rows, GroupBy::Field);
        assert_eq!(by_field.len(), 2);
        assert_eq!(by_field.iter().map(|g| g.n_rows).sum::<usize>(), rows.len());

        // Independent recount of field F's multiplier distribution.
        let f = by_field.iter().find(|g| g.key == "F").unwrap();
        let members = [1.0, 2.0, 3.0];
        assert_eq!(f.multiplier.median, crate::stats::quantile(&members, 0.5));
        assert_eq!(f.multiplier.lower, crate::stats::quantile(&members, 0.025));
        assert_eq!(f.multiplier.upper, crate::stats::quantile(&members, 0.975));

        // A two-member group still brackets; a single-member group
        // collapses to the point.
        let by_year = aggregate_by(&rows, GroupBy::Year);
        assert_eq!(by_year.iter().map(|g| g.n_rows).sum::<usize>(), rows.len());
        let g = by_field.iter().find(|g| g.key == "G").unwrap();
        assert_eq!(g.n_rows, 2);

        let single = aggregate_by(&rows[..1], GroupBy::Field);
        assert_eq!(single[0].multiplier.median, single[0].multiplier.lower);
        assert_eq!(single[0].multiplier.median, single[0].multiplier.upper);
    }

    #[test]
    fn unlabelled_rows_join_no_group() {
        let mut summary = fixture_summary("j", 2.0, 0.5, "Physics", 2010);
        summary.subset = None;
        let rows = journal_table(&[summary], &BTreeMap::new());
        assert_eq!(rows.len(), 1);
        assert!(aggregate_by(&rows, GroupBy::Field).is_empty());
    }
}
