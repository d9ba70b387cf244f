//! Forward sampler of the generative model.
//!
//! This is the brute-force oracle for the closed-form expectations and
//! variances, the ground truth for inference-recovery experiments, and
//! the source of synthetic corpora for pipeline round-trip tests. Every
//! sampler is deterministic given its seed; replicates and articles use
//! seeds derived from a root seed so parallel fan-out cannot change
//! results.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::records::{PreprintRecord, PublicationRecord, ReferenceRecord};
use crate::model::{decay_density, ArticleParams, JournalParams, MeanVariance};
use crate::priors::Priors;
use crate::stats::derive_seed;
use crate::trajectory::{CitationEvent, CitationTrajectory};

/// Default calendar anchor for synthetic trajectories.
pub fn default_preprint_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date")
}

/// Simulate one citation trajectory with a caller-supplied generator:
/// day-by-day Poisson draws with mean `λ(t)·f(t)·(m + C(t − 1))`, the
/// running count feeding the next day's rate.
///
/// Per-day counts saturate at `u32::MAX`; parameter draws from
/// heavy-tailed priors can push expected totals far beyond any physical
/// citation count, and the simulator degrades gracefully instead of
/// overflowing.
pub fn simulate_trajectory_with<R: Rng + ?Sized>(
    article: &ArticleParams,
    theta: f64,
    m: f64,
    preprint_date: NaiveDate,
    rng: &mut R,
) -> CitationTrajectory {
    let mut events = Vec::new();
    let mut cumulative = 0u64;
    for day in 0..=article.horizon {
        let mean = article.effective_rate(day, theta)
            * decay_density(day, article.beta)
            * (m + cumulative as f64);
        if mean > 0.0 {
            let draws = rand_distr::Poisson::new(mean).expect("positive Poisson mean");
            let count = draws.sample(rng) as u32;
            if count > 0 {
                events.push(CitationEvent { day, count });
                cumulative += count as u64;
            }
        }
    }
    CitationTrajectory {
        preprint_date,
        publication_date: preprint_date + chrono::Days::new(article.preprint_duration as u64),
        horizon_date: preprint_date + chrono::Days::new(article.horizon as u64),
        events,
    }
}

/// Simulate one citation trajectory, deterministic given `seed`.
pub fn simulate_trajectory(
    article: &ArticleParams,
    theta: f64,
    m: f64,
    preprint_date: NaiveDate,
    seed: u64,
) -> CitationTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_trajectory_with(article, theta, m, preprint_date, &mut rng)
}

/// How synthetic preprint durations `T′` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DurationSpec {
    /// Every article is published exactly `days` after posting.
    Fixed { days: u32 },
    /// Uniform over `[min, max]` days, inclusive.
    Uniform { min: u32, max: u32 },
}

impl Default for DurationSpec {
    /// Uniform over 30–730 days: the range in which articles qualify for
    /// fitting while exercising short and long preprint phases.
    fn default() -> Self {
        DurationSpec::Uniform { min: 30, max: 730 }
    }
}

impl DurationSpec {
    fn max_days(&self) -> u32 {
        match *self {
            DurationSpec::Fixed { days } => days,
            DurationSpec::Uniform { max, .. } => max,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match *self {
            DurationSpec::Fixed { days } => days,
            DurationSpec::Uniform { min, max } => rng.gen_range(min..=max),
        }
    }

    fn validate(&self) -> Result<()> {
        if let DurationSpec::Uniform { min, max } = *self {
            if min > max {
                return Err(Error::input(format!(
                    "duration range is empty: [{min}, {max}]"
                )));
            }
        }
        Ok(())
    }
}

/// How synthetic decay time scales `β` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecaySpec {
    /// Every article decays with the same time scale.
    Fixed { days: f64 },
    /// Drawn per article from the decay prior.
    Prior,
}

impl Default for DecaySpec {
    fn default() -> Self {
        DecaySpec::Prior
    }
}

/// Specification of one synthetic journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticJournal {
    /// Journal identifier used in exported records.
    pub journal_id: String,
    /// Ground-truth journal parameters (Φ, ε, θ).
    pub params: JournalParams,
    /// Number of articles to simulate (≥ 1).
    pub n_articles: usize,
    /// Sampler for preprint durations `T′`.
    #[serde(default)]
    pub duration: DurationSpec,
    /// Observation horizon in days after posting, shared by all articles.
    pub horizon_days: u32,
    /// Sampler for decay time scales `β`.
    #[serde(default)]
    pub decay: DecaySpec,
}

impl SyntheticJournal {
    /// Check the specification invariants.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.duration.validate()?;
        if self.journal_id.is_empty()
            || !self
                .journal_id
                .chars()
                .all(|c| c.is_ascii_alphabetic() || c == '-' || c == '.')
        {
            return Err(Error::input(format!(
                "synthetic journal id {:?} must be non-empty and use only letters, '-' or '.', \
                 so generated article identifiers stay extractable",
                self.journal_id
            )));
        }
        if self.n_articles == 0 {
            return Err(Error::input("a synthetic journal needs at least one article"));
        }
        if self.duration.max_days() > self.horizon_days {
            return Err(Error::input(format!(
                "longest preprint duration {}d exceeds the horizon {}d",
                self.duration.max_days(),
                self.horizon_days
            )));
        }
        if let DecaySpec::Fixed { days } = self.decay {
            if !(days > 0.0) {
                return Err(Error::input(format!(
                    "fixed decay time scale must be > 0, got {days}"
                )));
            }
        }
        Ok(())
    }
}

/// One simulated article with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedArticle {
    /// Article identifier used in exported records.
    pub article_id: String,
    /// Journal the article was published in.
    pub journal_id: String,
    /// Ground-truth parameters, including the drawn φ and β.
    pub params: ArticleParams,
    /// The simulated citation history.
    pub trajectory: CitationTrajectory,
}

/// Simulate a whole journal: per article, draw the latent rate
/// `φ ~ LogNormal(Φ, ε)`, the preprint duration, and the decay time scale
/// (from the prior unless fixed), then simulate the trajectory.
///
/// Articles are seeded independently from the root seed, so the result is
/// deterministic and insensitive to evaluation order.
pub fn simulate_journal(
    spec: &SyntheticJournal,
    m: f64,
    priors: &Priors,
    preprint_date: NaiveDate,
    seed: u64,
) -> Result<Vec<SimulatedArticle>> {
    spec.validate()?;
    priors.validate()?;
    let mut articles = Vec::with_capacity(spec.n_articles);
    for index in 0..spec.n_articles {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
        let log_phi = rand_distr::Normal::new(spec.params.location, spec.params.scale)
            .expect("validated scale")
            .sample(&mut rng);
        let phi = log_phi.exp();
        let beta = match spec.decay {
            DecaySpec::Fixed { days } => days,
            DecaySpec::Prior => priors.decay.sample(&mut rng),
        };
        let duration = spec.duration.sample(&mut rng);
        let params = ArticleParams::new(phi, beta, duration, spec.horizon_days)?;
        let trajectory = simulate_trajectory_with(
            &params,
            spec.params.multiplier,
            m,
            preprint_date,
            &mut rng,
        );
        articles.push(SimulatedArticle {
            // Old-style repository identifier, so exported references
            // match the extraction pattern on round-trip.
            article_id: format!("{}/{index:07}", spec.journal_id),
            journal_id: spec.journal_id.clone(),
            params,
            trajectory,
        });
    }
    Ok(articles)
}

/// Empirical per-day mean and sample variance of the cumulative count
/// `C(t)` over `n_reps` independent replicates of one article.
pub fn monte_carlo_mean_curve(
    article: &ArticleParams,
    theta: f64,
    m: f64,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<MeanVariance>> {
    if n_reps < 2 {
        return Err(Error::input("need at least 2 replicates for a variance"));
    }
    article.validate()?;
    let days = article.horizon as usize + 1;
    // Welford accumulators per day.
    let mut means = vec![0.0f64; days];
    let mut m2 = vec![0.0f64; days];
    for rep in 0..n_reps {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, rep as u64));
        let mut cumulative = 0u64;
        for day in 0..=article.horizon {
            let mean_rate = article.effective_rate(day, theta)
                * decay_density(day, article.beta)
                * (m + cumulative as f64);
            if mean_rate > 0.0 {
                let count = rand_distr::Poisson::new(mean_rate)
                    .expect("positive Poisson mean")
                    .sample(&mut rng) as u32;
                cumulative += count as u64;
            }
            let x = cumulative as f64;
            let idx = day as usize;
            let delta = x - means[idx];
            means[idx] += delta / (rep + 1) as f64;
            m2[idx] += delta * (x - means[idx]);
        }
    }
    Ok(means
        .into_iter()
        .zip(m2)
        .map(|(mean, m2)| MeanVariance {
            mean,
            variance: m2 / (n_reps - 1) as f64,
        })
        .collect())
}

/// Export simulated articles in the record format the ingestion pipeline
/// consumes: one preprint record and one publication record per article,
/// and one dated reference record per citation. Pre-publication citations
/// cite the repository identifier; post-publication citations cite the
/// DOI (exercising both extraction patterns on round-trip).
pub fn export_corpus(
    articles: &[SimulatedArticle],
    subject: &str,
) -> (
    Vec<PreprintRecord>,
    Vec<PublicationRecord>,
    Vec<ReferenceRecord>,
) {
    let mut preprints = Vec::with_capacity(articles.len());
    let mut publications = Vec::with_capacity(articles.len());
    let mut references = Vec::new();
    for article in articles {
        // Dots instead of slashes in the suffix keep the DOI free of
        // old-style repository-identifier substrings.
        let doi = format!("10.5555/{}", article.article_id.replace('/', "."));
        preprints.push(PreprintRecord {
            arxiv_id: article.article_id.clone(),
            doi: Some(doi.clone()),
            date: article.trajectory.preprint_date,
            subjects: vec![format!("{subject} - Synthetic")],
        });
        publications.push(PublicationRecord {
            doi: doi.clone(),
            journal: article.journal_id.clone(),
            kind: "article".into(),
            published_online: Some(article.trajectory.publication_date),
            published_print: None,
            created: None,
            issued: None,
        });
        let boundary = article.trajectory.preprint_duration();
        for event in &article.trajectory.events {
            let date = article.trajectory.preprint_date + chrono::Days::new(event.day as u64);
            let text = if event.day <= boundary {
                format!("preprint {}", article.article_id)
            } else {
                format!("journal version, doi:{doi}")
            };
            for _ in 0..event.count {
                references.push(ReferenceRecord {
                    date,
                    text: text.clone(),
                    resolved_doi: None,
                });
            }
        }
    }
    (preprints, publications, references)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::expected_citations_exact;
    use approx::assert_relative_eq;

    fn article(phi: f64, beta: f64, t_prime: u32, horizon: u32) -> ArticleParams {
        ArticleParams::new(phi, beta, t_prime, horizon).unwrap()
    }

    #[test]
    fn zero_rate_yields_no_events() {
        let a = article(0.0, 365.0, 100, 1000);
        let traj = simulate_trajectory(&a, 5.0, 30.0, default_preprint_date(), 3);
        assert!(traj.events.is_empty());
        assert_eq!(traj.preprint_duration(), 100);
        assert_eq!(traj.horizon(), 1000);
    }

    #[test]
    fn same_seed_reproduces_different_seeds_diverge() {
        let a = article(1.5, 365.0, 180, 1500);
        let t1 = simulate_trajectory(&a, 2.0, 30.0, default_preprint_date(), 11);
        let t2 = simulate_trajectory(&a, 2.0, 30.0, default_preprint_date(), 11);
        assert_eq!(t1, t2);
        let t3 = simulate_trajectory(&a, 2.0, 30.0, default_preprint_date(), 12);
        assert_ne!(t1, t3);
    }

    #[test]
    fn unit_multiplier_makes_publication_day_irrelevant() {
        // With θ = 1 the per-day Poisson means are identical whatever the
        // boundary, so the same seed gives the same events.
        let early = article(1.2, 365.0, 50, 1200);
        let late = article(1.2, 365.0, 900, 1200);
        let t1 = simulate_trajectory(&early, 1.0, 30.0, default_preprint_date(), 5);
        let t2 = simulate_trajectory(&late, 1.0, 30.0, default_preprint_date(), 5);
        assert_eq!(t1.events, t2.events);
    }

    #[test]
    fn empirical_mean_tracks_exact_expectation() {
        let a = article(1.0, 365.0, 180, 1200);
        let theta = 2.0;
        let m = 30.0;
        let n_reps = 3000;
        let curve = monte_carlo_mean_curve(&a, theta, m, n_reps, 17).unwrap();
        for &day in &[0u32, 90, 180, 400, 1200] {
            let mv = curve[day as usize];
            let exact = expected_citations_exact(day, &a, theta, m);
            let se = (mv.variance / n_reps as f64).sqrt();
            assert!(
                (mv.mean - exact).abs() <= 3.0 * se.max(1e-3),
                "day {day}: mean {} vs exact {exact} (se {se})",
                mv.mean
            );
        }
    }

    #[test]
    fn attachment_overdisperses_late_counts() {
        let a = article(2.0, 365.0, 2000, 2000);
        let curve = monte_carlo_mean_curve(&a, 1.0, 30.0, 2000, 23).unwrap();
        let last = curve.last().unwrap();
        assert!(
            last.variance > last.mean,
            "variance {} should exceed mean {}",
            last.variance,
            last.mean
        );
    }

    #[test]
    fn identical_replicates_have_zero_variance() {
        let a = article(1.5, 365.0, 100, 800);
        let t1 = simulate_trajectory(&a, 2.0, 30.0, default_preprint_date(), 99);
        let t2 = simulate_trajectory(&a, 2.0, 30.0, default_preprint_date(), 99);
        let totals = [t1.total_citations() as f64, t2.total_citations() as f64];
        assert_eq!(crate::stats::sample_variance(&totals), 0.0);
    }

    #[test]
    fn replicate_count_below_two_is_rejected() {
        let a = article(1.0, 365.0, 100, 800);
        assert!(monte_carlo_mean_curve(&a, 1.0, 30.0, 1, 0).is_err());
    }

    fn journal_spec(location: f64, scale: f64, n: usize) -> SyntheticJournal {
        SyntheticJournal {
            journal_id: "synth-j".into(),
            params: JournalParams::new(location, scale, 2.0).unwrap(),
            n_articles: n,
            duration: DurationSpec::default(),
            horizon_days: 1825,
            decay: DecaySpec::Fixed { days: 365.0 },
        }
    }

    #[test]
    fn degenerate_scale_pins_latent_rates_to_the_median() {
        let spec = journal_spec(0.2f64.ln(), 1e-9, 50);
        let articles = simulate_journal(&spec, 30.0, &Priors::default(), default_preprint_date(), 1)
            .unwrap();
        for a in &articles {
            assert_relative_eq!(a.params.phi, 0.2, max_relative = 1e-6);
        }
    }

    #[test]
    fn sample_median_of_latent_rates_matches_exp_location() {
        // Only the φ draws matter here; a short horizon keeps the
        // heavy-tailed trajectories cheap.
        let spec = SyntheticJournal {
            duration: DurationSpec::Fixed { days: 30 },
            horizon_days: 40,
            ..journal_spec(0.5, 1.0, 4000)
        };
        let articles = simulate_journal(&spec, 30.0, &Priors::default(), default_preprint_date(), 2)
            .unwrap();
        let mut phis: Vec<f64> = articles.iter().map(|a| a.params.phi).collect();
        phis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = phis[phis.len() / 2];
        // Monte Carlo error of the median on the log scale: ≈ 1.2533·ε/√n.
        let tol = 3.0 * 1.2533 / (4000f64).sqrt();
        assert!(
            (median.ln() - 0.5).abs() < tol,
            "log median {} vs location 0.5",
            median.ln()
        );
    }

    #[test]
    fn standard_lognormal_splits_rates_around_one() {
        let spec = SyntheticJournal {
            duration: DurationSpec::Fixed { days: 30 },
            horizon_days: 40,
            ..journal_spec(0.0, 1.0, 4000)
        };
        let articles = simulate_journal(&spec, 30.0, &Priors::default(), default_preprint_date(), 3)
            .unwrap();
        let below = articles.iter().filter(|a| a.params.phi < 1.0).count();
        let frac = below as f64 / articles.len() as f64;
        assert!((frac - 0.5).abs() < 3.0 * 0.5 / (4000f64).sqrt() + 0.01, "{frac}");
    }

    #[test]
    fn journal_articles_respect_duration_and_horizon() {
        let spec = SyntheticJournal {
            duration: DurationSpec::Uniform { min: 30, max: 730 },
            ..journal_spec(0.0, 0.5, 200)
        };
        let articles = simulate_journal(&spec, 30.0, &Priors::default(), default_preprint_date(), 4)
            .unwrap();
        for a in &articles {
            assert!((30..=730).contains(&a.params.preprint_duration));
            assert_eq!(a.params.horizon, 1825);
            assert!(a.trajectory.events.iter().all(|e| e.day <= 1825));
            assert_eq!(
                a.trajectory.pre_publication_count() + a.trajectory.post_publication_count(),
                a.trajectory.total_citations()
            );
        }
    }

    #[test]
    fn invalid_journal_specs_are_rejected() {
        let mut spec = journal_spec(0.0, 0.5, 0);
        assert!(spec.validate().is_err());
        spec.n_articles = 10;
        spec.duration = DurationSpec::Uniform { min: 700, max: 30 };
        assert!(spec.validate().is_err());
        spec.duration = DurationSpec::Fixed { days: 5000 };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn exported_corpus_covers_every_citation_once() {
        let spec = journal_spec(0.5, 0.5, 20);
        let articles = simulate_journal(&spec, 30.0, &Priors::default(), default_preprint_date(), 7)
            .unwrap();
        let (preprints, publications, references) = export_corpus(&articles, "Synthetic Physics");
        assert_eq!(preprints.len(), 20);
        assert_eq!(publications.len(), 20);
        let total: u64 = articles.iter().map(|a| a.trajectory.total_citations()).sum();
        assert_eq!(references.len(), total as usize);
        // Every reference can be attributed by exactly one extractor path.
        for r in &references {
            let arxiv = crate::ingest::find_arxiv_id(&r.text);
            let doi = crate::ingest::find_doi(&r.text);
            assert!(arxiv.is_some() ^ doi.is_some(), "ambiguous reference: {}", r.text);
        }
    }
}
