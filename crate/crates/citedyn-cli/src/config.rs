//! Run configuration: one TOML file drives every pipeline stage.
//!
//! All sections are optional; a missing file is equivalent to an empty
//! one, so `citedyn fit` works out of the box on a directory produced by
//! `citedyn ingest`. Stages that need their own section (`[simulate]`,
//! `[ingest]`) fail with a clear message when it is absent.

use std::path::Path;

use chrono::NaiveDate;
use citedyn::inference::ChainConfig;
use citedyn::ingest::IngestConfig;
use citedyn::priors::Priors;
use citedyn::simulate::{default_preprint_date, SyntheticJournal};
use citedyn::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a run needs, in one deserializable bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed. Every stage derives its own independent streams from
    /// it, so one number reproduces the whole pipeline.
    #[serde(default)]
    pub seed: u64,
    /// Baseline attention mass `m` shared by simulation, fitting, and
    /// predictive checks.
    #[serde(default = "default_m")]
    pub m: f64,
    /// Prior hyperparameters; the model defaults apply when omitted.
    #[serde(default)]
    pub priors: Priors,
    /// Sampler configuration. The `seed` field here is ignored: each
    /// subset gets a seed derived from the run seed instead, so that
    /// adding or filtering subsets never reshuffles another subset's
    /// chains.
    #[serde(default)]
    pub chains: ChainConfig,
    /// Synthetic-corpus generation, used by `citedyn simulate`.
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    /// Record-assembly settings, used by `citedyn ingest`.
    #[serde(default)]
    pub ingest: Option<IngestConfig>,
    /// Reporting settings.
    #[serde(default)]
    pub report: ReportConfig,
    /// Restrict `fit` and `report` to a slice of the subsets.
    #[serde(default)]
    pub filters: SubsetFilters,
}

fn default_m() -> f64 {
    30.0
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            m: default_m(),
            priors: Priors::default(),
            chains: ChainConfig::default(),
            simulate: None,
            ingest: None,
            report: ReportConfig::default(),
            filters: SubsetFilters::default(),
        }
    }
}

impl RunConfig {
    /// Read and validate a TOML configuration file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Check every section that can be checked without running a stage.
    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(Error::input(format!(
                "baseline mass m must be positive and finite, got {}",
                self.m
            )));
        }
        self.priors.validate()?;
        if let Some(simulate) = &self.simulate {
            simulate.validate()?;
        }
        if let Some(ingest) = &self.ingest {
            ingest.validate()?;
        }
        self.report.validate()?;
        Ok(())
    }
}

/// Settings for `citedyn simulate`: which journals to generate and how
/// the exported records are labelled.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Major subject stamped on every exported preprint.
    #[serde(default = "default_subject")]
    pub subject: String,
    /// Posting date shared by all simulated articles.
    #[serde(default = "default_preprint_date")]
    pub preprint_date: NaiveDate,
    /// Journals to simulate, each with its own ground truth.
    pub journals: Vec<SyntheticJournal>,
}

fn default_subject() -> String {
    "Synthetic Benchmarks".to_string()
}

impl SimulateConfig {
    /// Check journal specs without drawing anything.
    pub fn validate(&self) -> Result<()> {
        if self.journals.is_empty() {
            return Err(Error::input("[simulate] lists no journals"));
        }
        for journal in &self.journals {
            journal.validate()?;
        }
        Ok(())
    }
}

/// Settings for `citedyn report`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// Posterior-predictive sample paths per requested article.
    pub predictive_samples: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            predictive_samples: 200,
        }
    }
}

impl ReportConfig {
    fn validate(&self) -> Result<()> {
        if self.predictive_samples == 0 {
            return Err(Error::input(
                "[report] predictive_samples must be at least 1",
            ));
        }
        Ok(())
    }
}

/// Optional restriction of `fit` and `report` to chosen subsets. Empty
/// lists mean "no restriction".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsetFilters {
    /// Keep only these major subjects.
    pub fields: Vec<String>,
    /// Keep only these publication years.
    pub years: Vec<i32>,
}

impl SubsetFilters {
    /// Does a subset with this label pass the filters?
    pub fn keeps(&self, field: &str, year: i32) -> bool {
        (self.fields.is_empty() || self.fields.iter().any(|f| f == field))
            && (self.years.is_empty() || self.years.contains(&year))
    }
}
