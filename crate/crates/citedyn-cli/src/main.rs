//! `citedyn` — command-line pipeline for the citation-dynamics model.
//!
//! Four stages share one output directory: `simulate` writes synthetic
//! harvest records, `ingest` assembles records into fitting subsets,
//! `fit` samples the posterior per subset, and `report` turns draws
//! into journal tables, aggregates, and predictive bands.
//!
//! Exit codes: 0 on success, 2 on input or usage errors, 3 on numerical
//! failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use citedyn::{Error, Result};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "citedyn",
    version,
    about = "Infer the causal effect of journals on citation dynamics",
    long_about = "Pipeline for the hierarchical citation model: simulate synthetic corpora, \
                  ingest preprint/publication/reference records, fit the posterior by NUTS, \
                  and report journal effects with predictive checks."
)]
struct Cli {
    /// TOML run configuration (defaults apply when omitted).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Root seed, overriding the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory shared by all pipeline stages.
    #[arg(long, global = true, default_value = "citedyn-run", value_name = "DIR")]
    out: PathBuf,

    /// Worker threads (defaults to all logical CPUs).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic journals and export them as harvest records.
    Simulate,
    /// Assemble harvest records into fitting subsets and journal impacts.
    Ingest {
        /// Preprint metadata, one JSON record per line.
        #[arg(long, value_name = "FILE")]
        preprints: Option<PathBuf>,
        /// Publication metadata, one JSON record per line.
        #[arg(long, value_name = "FILE")]
        publications: Option<PathBuf>,
        /// Citing references, one JSON record per line.
        #[arg(long, value_name = "FILE")]
        references: Option<PathBuf>,
    },
    /// Sample the posterior for every subset (resumes interrupted runs).
    Fit,
    /// Write journal tables, aggregates, and per-article predictive bands.
    Report {
        /// Article identifier to draw a posterior-predictive band for
        /// (repeatable).
        #[arg(long = "article", value_name = "ID")]
        articles: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("citedyn: {err}");
            if err.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::input(format!("cannot size the worker pool: {e}")))?;
    }

    let mut config = match &cli.config {
        Some(path) => config::RunConfig::load(path)?,
        None => config::RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }

    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;

    match cli.command {
        Command::Simulate => commands::cmd_simulate(&config, &cli.out),
        Command::Ingest {
            preprints,
            publications,
            references,
        } => commands::cmd_ingest(&config, &cli.out, preprints, publications, references),
        Command::Fit => commands::cmd_fit(&config, &cli.out),
        Command::Report { articles } => commands::cmd_report(&config, &cli.out, &articles),
    }
}
