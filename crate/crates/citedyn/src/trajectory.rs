//! Citation trajectories: day-indexed citation counts for one article.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ArticleParams;

/// Citations received on one day: the day offset `t` (days since the
/// preprint was posted) and how many citations arrived that day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationEvent {
    /// Days since the preprint appeared (day 0 is the posting day).
    pub day: u32,
    /// Number of citations received on that day (≥ 1).
    pub count: u32,
}

/// The observed citation history of one article.
///
/// Calendar dates anchor the trajectory; all event days are offsets from
/// `preprint_date`. The publication date must not precede the preprint
/// date, and the horizon (last observed day, typically the end of the
/// database) must not precede the publication date.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationTrajectory {
    /// Day the preprint was posted (day offset 0).
    pub preprint_date: NaiveDate,
    /// Day the journal version appeared.
    pub publication_date: NaiveDate,
    /// Last day of the observation window (inclusive).
    pub horizon_date: NaiveDate,
    /// Per-day citation counts, sorted strictly increasing in day; days
    /// without citations are omitted.
    pub events: Vec<CitationEvent>,
}

impl CitationTrajectory {
    /// Validated constructor.
    pub fn new(
        preprint_date: NaiveDate,
        publication_date: NaiveDate,
        horizon_date: NaiveDate,
        events: Vec<CitationEvent>,
    ) -> Result<Self> {
        let traj = CitationTrajectory {
            preprint_date,
            publication_date,
            horizon_date,
            events,
        };
        traj.validate()?;
        Ok(traj)
    }

    /// Check the type invariants: ordered dates, strictly increasing event
    /// days within the observation window, and positive counts.
    pub fn validate(&self) -> Result<()> {
        if self.publication_date < self.preprint_date {
            return Err(Error::input(format!(
                "publication date {} precedes preprint date {}",
                self.publication_date, self.preprint_date
            )));
        }
        if self.horizon_date < self.publication_date {
            return Err(Error::input(format!(
                "horizon date {} precedes publication date {}",
                self.horizon_date, self.publication_date
            )));
        }
        let horizon = self.horizon();
        let mut prev: Option<u32> = None;
        for event in &self.events {
            if event.count == 0 {
                return Err(Error::input(format!(
                    "event on day {} has zero count",
                    event.day
                )));
            }
            if event.day > horizon {
                return Err(Error::input(format!(
                    "event day {} lies beyond the horizon {horizon}",
                    event.day
                )));
            }
            if let Some(p) = prev {
                if event.day <= p {
                    return Err(Error::input(format!(
                        "event days must increase strictly: {} after {p}",
                        event.day
                    )));
                }
            }
            prev = Some(event.day);
        }
        Ok(())
    }

    /// Days spent as a preprint before publication, `T′`.
    pub fn preprint_duration(&self) -> u32 {
        (self.publication_date - self.preprint_date).num_days() as u32
    }

    /// Last observed day offset, `T`.
    pub fn horizon(&self) -> u32 {
        (self.horizon_date - self.preprint_date).num_days() as u32
    }

    /// Pre-publication citations `C′`: all citations received on or before
    /// the publication day.
    pub fn pre_publication_count(&self) -> u64 {
        let boundary = self.preprint_duration();
        self.events
            .iter()
            .filter(|e| e.day <= boundary)
            .map(|e| e.count as u64)
            .sum()
    }

    /// Post-publication citations `C`: all citations received strictly
    /// after the publication day.
    pub fn post_publication_count(&self) -> u64 {
        let boundary = self.preprint_duration();
        self.events
            .iter()
            .filter(|e| e.day > boundary)
            .map(|e| e.count as u64)
            .sum()
    }

    /// Total citations over the observation window.
    pub fn total_citations(&self) -> u64 {
        self.events.iter().map(|e| e.count as u64).sum()
    }

    /// Cumulative citation count at the end of each event day, in event
    /// order: `(day, C(day))`.
    pub fn cumulative_at_events(&self) -> Vec<(u32, u64)> {
        let mut total = 0u64;
        self.events
            .iter()
            .map(|e| {
                total += e.count as u64;
                (e.day, total)
            })
            .collect()
    }

    /// Combine this trajectory's timeline with model parameters, checking
    /// consistency.
    pub fn article_params(&self, phi: f64, beta: f64) -> Result<ArticleParams> {
        ArticleParams::new(phi, beta, self.preprint_duration(), self.horizon())
    }
}
