//! Posterior inference: multi-chain sampling, convergence diagnostics,
//! summaries, and posterior-mode estimation.
//!
//! Chains run independently (and concurrently) with per-chain random
//! streams derived from one root seed, so results are bit-reproducible
//! regardless of thread scheduling. Draws are stored in constrained space;
//! summaries report medians and central 95% intervals plus the derived
//! journal-level rates e^Φ and e^Φ·θ.

pub mod diagnostics;
pub mod nuts;

pub use diagnostics::{diagnostics, Diagnostics, RHAT_WARNING_THRESHOLD};
pub use nuts::Target;

use std::collections::VecDeque;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{Posterior, SubsetData};
use crate::priors::Priors;
use crate::stats::{derive_seed, quantile_sorted};

impl Target for Posterior<'_> {
    fn dim(&self) -> usize {
        Posterior::dim(self)
    }

    fn value_and_gradient(&self, position: &[f64]) -> (f64, Vec<f64>) {
        Posterior::value_and_gradient(self, position)
    }
}

/// How many prior draws to try before giving up on initialization.
const INIT_RETRIES: usize = 100;

/// Multi-chain run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Number of independent chains.
    pub n_chains: usize,
    /// Transitions per chain, warmup included.
    pub n_iterations: usize,
    /// Fraction of iterations spent on warmup (strictly between 0 and 1).
    pub warmup_fraction: f64,
    /// Target acceptance statistic for step-size adaptation.
    pub target_accept: f64,
    /// Cap on trajectory doublings per transition.
    pub max_tree_depth: usize,
    /// Root seed; per-chain seeds are derived from it.
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_chains: 4,
            n_iterations: 1000,
            warmup_fraction: 0.5,
            target_accept: 0.98,
            max_tree_depth: 20,
            seed: 0,
        }
    }
}

impl ChainConfig {
    /// Number of leading iterations discarded as warmup.
    pub fn n_warmup(&self) -> usize {
        (self.n_iterations as f64 * self.warmup_fraction).floor() as usize
    }

    /// Check the configuration invariants.
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 {
            return Err(Error::input("need at least one chain"));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(Error::input(format!(
                "warmup fraction must lie strictly between 0 and 1, got {}",
                self.warmup_fraction
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::input(format!(
                "target acceptance must lie strictly between 0 and 1, got {}",
                self.target_accept
            )));
        }
        if self.max_tree_depth < 1 {
            return Err(Error::input("max tree depth must be at least 1"));
        }
        let warmup = self.n_warmup();
        if warmup < 1 || warmup >= self.n_iterations {
            return Err(Error::input(format!(
                "{} iterations with warmup fraction {} leave no draws",
                self.n_iterations, self.warmup_fraction
            )));
        }
        Ok(())
    }
}

/// Column indices of one journal's parameters within a constrained draw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalColumns {
    /// The journal's identifier.
    pub journal_id: String,
    /// Column of Φ.
    pub location: usize,
    /// Column of ε.
    pub scale: usize,
    /// Column of θ.
    pub multiplier: usize,
}

/// One chain's kept draws in constrained space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    /// One row per post-warmup iteration, one column per parameter.
    pub draws: Vec<Vec<f64>>,
    /// Divergence flag per kept transition.
    pub divergent: Vec<bool>,
    /// Acceptance statistic per kept transition.
    pub accept_stat: Vec<f64>,
    /// Step size frozen at the end of warmup.
    pub step_size: f64,
    /// The seed this chain ran with.
    pub seed: u64,
}

/// All chains' post-warmup draws for one subset fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    /// Constrained parameter names, aligned with draw columns.
    pub parameter_names: Vec<String>,
    /// Where each journal's Φ, ε, θ live in a draw row.
    pub journal_columns: Vec<JournalColumns>,
    /// Per-chain draws.
    pub chains: Vec<ChainDraws>,
}

impl PosteriorDraws {
    /// Number of chains.
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Total kept draws across chains.
    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(|c| c.draws.len()).sum()
    }

    /// Total divergent transitions across chains.
    pub fn divergence_count(&self) -> usize {
        self.chains
            .iter()
            .map(|c| c.divergent.iter().filter(|&&d| d).count())
            .sum()
    }

    /// All chains' values of one parameter, concatenated in chain order.
    pub fn pooled(&self, column: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_draws());
        for chain in &self.chains {
            out.extend(chain.draws.iter().map(|row| row[column]));
        }
        out
    }

    /// Column index of a parameter by name.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.parameter_names.iter().position(|n| n == name)
    }

    /// Write all draws as CSV: `chain, iteration, divergent, accept_stat`
    /// followed by one column per parameter.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header = vec![
            "chain".to_string(),
            "iteration".to_string(),
            "divergent".to_string(),
            "accept_stat".to_string(),
        ];
        header.extend(self.parameter_names.iter().cloned());
        writer.write_record(&header).map_err(|e| csv_error(path, e))?;
        for (chain_idx, chain) in self.chains.iter().enumerate() {
            for (iter_idx, row) in chain.draws.iter().enumerate() {
                let mut record = vec![
                    chain_idx.to_string(),
                    iter_idx.to_string(),
                    u8::from(chain.divergent[iter_idx]).to_string(),
                    chain.accept_stat[iter_idx].to_string(),
                ];
                record.extend(row.iter().map(|v| v.to_string()));
                writer.write_record(&record).map_err(|e| csv_error(path, e))?;
            }
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Read draws back from [`Self::write_csv`] output. Journal columns
    /// are reconstructed from the parameter names.
    pub fn read_csv(path: &Path) -> Result<PosteriorDraws> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let header = reader
            .headers()
            .map_err(|e| csv_error(path, e))?
            .clone();
        if header.len() < 4 {
            return Err(Error::Parse {
                context: path.display().to_string(),
                message: "draw file has fewer than four columns".into(),
            });
        }
        let parameter_names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
        let mut chains: Vec<ChainDraws> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let parse = |idx: usize| -> Result<f64> {
                record[idx].parse::<f64>().map_err(|e| Error::Parse {
                    context: format!("{}:{}", path.display(), line + 2),
                    message: e.to_string(),
                })
            };
            let chain_idx = parse(0)? as usize;
            while chains.len() <= chain_idx {
                chains.push(ChainDraws {
                    draws: vec![],
                    divergent: vec![],
                    accept_stat: vec![],
                    step_size: f64::NAN,
                    seed: 0,
                });
            }
            let divergent = parse(2)? != 0.0;
            let accept = parse(3)?;
            let mut row = Vec::with_capacity(parameter_names.len());
            for idx in 4..record.len() {
                row.push(parse(idx)?);
            }
            let chain = &mut chains[chain_idx];
            chain.draws.push(row);
            chain.divergent.push(divergent);
            chain.accept_stat.push(accept);
        }
        let journal_columns = journal_columns_from_names(&parameter_names);
        Ok(PosteriorDraws {
            parameter_names,
            journal_columns,
            chains,
        })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            context: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}

/// Recover journal column triplets from constrained parameter names.
fn journal_columns_from_names(names: &[String]) -> Vec<JournalColumns> {
    let mut out = Vec::new();
    for (idx, name) in names.iter().enumerate() {
        if let Some(id) = name
            .strip_prefix("Phi[")
            .and_then(|rest| rest.strip_suffix(']'))
        {
            let scale = names.iter().position(|n| n == &format!("epsilon[{id}]"));
            let multiplier = names.iter().position(|n| n == &format!("theta[{id}]"));
            if let (Some(scale), Some(multiplier)) = (scale, multiplier) {
                out.push(JournalColumns {
                    journal_id: id.to_string(),
                    location: idx,
                    scale,
                    multiplier,
                });
            }
        }
    }
    out
}

/// Draw an initialization from the priors, retrying until the posterior
/// and its gradient are finite there.
fn initialize(posterior: &Posterior<'_>, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    for _ in 0..INIT_RETRIES {
        let draw = posterior.sample_from_priors(rng);
        let (value, grad) = posterior.value_and_gradient(&draw);
        if value.is_finite() && grad.iter().all(|g| g.is_finite()) {
            return Ok(draw);
        }
    }
    Err(Error::numerical(format!(
        "no finite initialization in {INIT_RETRIES} prior draws"
    )))
}

/// Sample the posterior of one subset with independent, concurrently-run
/// chains. Deterministic for a fixed `config.seed`.
pub fn sample_posterior(
    data: &SubsetData,
    priors: &Priors,
    config: &ChainConfig,
    m: f64,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let posterior = Posterior::new(data, *priors, m)?;
    let layout = posterior.layout().clone();
    let settings = nuts::RunSettings {
        n_iterations: config.n_iterations,
        n_warmup: config.n_warmup(),
        target_accept: config.target_accept,
        max_tree_depth: config.max_tree_depth,
    };

    let chains: Result<Vec<ChainDraws>> = (0..config.n_chains as u64)
        .into_par_iter()
        .map(|chain| {
            let seed = derive_seed(config.seed, chain);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = initialize(&posterior, &mut rng)?;
            let run = nuts::run_chain(&posterior, init, &settings, &mut rng)?;
            Ok(ChainDraws {
                draws: run
                    .positions
                    .iter()
                    .map(|q| layout.to_constrained(q))
                    .collect(),
                divergent: run.divergent,
                accept_stat: run.accept_stat,
                step_size: run.step_size,
                seed,
            })
        })
        .collect();

    let journal_columns = layout
        .journal_ids()
        .iter()
        .enumerate()
        .map(|(j, id)| JournalColumns {
            journal_id: id.clone(),
            location: layout.location(j),
            scale: layout.log_scale(j),
            multiplier: layout.log_multiplier(j),
        })
        .collect();

    Ok(PosteriorDraws {
        parameter_names: layout.constrained_names(),
        journal_columns,
        chains: chains?,
    })
}

/// Median and central 95% interval of one quantity, with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    /// Constrained parameter (or derived quantity) name.
    pub name: String,
    /// Posterior median.
    pub median: f64,
    /// 2.5th percentile.
    pub lower: f64,
    /// 97.5th percentile.
    pub upper: f64,
    /// Split R-hat, when computable.
    pub rhat: Option<f64>,
    /// Effective sample size, when computable.
    pub ess: Option<f64>,
}

/// Which (field, publication year) subset a fit belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetLabel {
    /// Field name.
    pub field: String,
    /// Publication year.
    pub year: i32,
}

/// Summary of one subset fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    /// Which subset was fit, when known.
    pub subset: Option<SubsetLabel>,
    /// Pooled post-warmup draw count.
    pub n_draws: usize,
    /// Per-parameter summaries.
    pub parameters: Vec<ParameterSummary>,
    /// Derived journal rates: e^Φ (`median_rate`) and e^Φ·θ
    /// (`median_rate_published`) per journal.
    pub derived: Vec<ParameterSummary>,
    /// Divergent transitions across chains.
    pub divergence_count: usize,
    /// Whether the divergence policy excludes this subset from aggregates.
    pub excluded: bool,
    /// Whether any R-hat exceeded the advisory threshold.
    pub rhat_warning: bool,
}

impl FitSummary {
    /// Look up a parameter or derived summary by name.
    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters
            .iter()
            .chain(&self.derived)
            .find(|p| p.name == name)
    }

    /// Journals covered by this fit, in parameter order.
    pub fn journal_ids(&self) -> Vec<String> {
        self.parameters
            .iter()
            .filter_map(|p| {
                p.name
                    .strip_prefix("theta[")
                    .and_then(|rest| rest.strip_suffix(']'))
                    .map(String::from)
            })
            .collect()
    }
}

fn quantile_summary(name: String, values: &mut Vec<f64>) -> ParameterSummary {
    values.sort_by(f64::total_cmp);
    ParameterSummary {
        name,
        median: quantile_sorted(values, 0.5),
        lower: quantile_sorted(values, 0.025),
        upper: quantile_sorted(values, 0.975),
        rhat: None,
        ess: None,
    }
}

/// Summarize draws: medians, central 95% intervals (linear-interpolation
/// percentiles), diagnostics, and the derived per-journal rates.
pub fn summarize(draws: &PosteriorDraws) -> FitSummary {
    let diag = diagnostics(draws);
    let mut parameters = Vec::with_capacity(draws.parameter_names.len());
    for (k, name) in draws.parameter_names.iter().enumerate() {
        let mut pooled = draws.pooled(k);
        let mut summary = quantile_summary(name.clone(), &mut pooled);
        summary.rhat = diag.rhat[k];
        summary.ess = diag.ess[k];
        parameters.push(summary);
    }

    let mut derived = Vec::with_capacity(2 * draws.journal_columns.len());
    for journal in &draws.journal_columns {
        let mut rate: Vec<f64> = Vec::with_capacity(draws.n_draws());
        let mut rate_published: Vec<f64> = Vec::with_capacity(draws.n_draws());
        for chain in &draws.chains {
            for row in &chain.draws {
                let r = row[journal.location].exp();
                rate.push(r);
                rate_published.push(r * row[journal.multiplier]);
            }
        }
        derived.push(quantile_summary(
            format!("median_rate[{}]", journal.journal_id),
            &mut rate,
        ));
        derived.push(quantile_summary(
            format!("median_rate_published[{}]", journal.journal_id),
            &mut rate_published,
        ));
    }

    FitSummary {
        subset: None,
        n_draws: draws.n_draws(),
        parameters,
        derived,
        divergence_count: diag.divergence_count,
        excluded: diag.excluded,
        rhat_warning: diag.rhat_warning,
    }
}

/// A local posterior mode in constrained space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapEstimate {
    /// Constrained parameter names.
    pub names: Vec<String>,
    /// Constrained values at the mode.
    pub values: Vec<f64>,
    /// The same point in unconstrained coordinates.
    pub unconstrained: Vec<f64>,
    /// Log posterior density (constrained space, no Jacobian) at the mode.
    pub log_density: f64,
    /// Euclidean norm of the gradient at the returned point.
    pub gradient_norm: f64,
    /// Quasi-Newton iterations used.
    pub iterations: usize,
}

const MAP_GRAD_TOL: f64 = 1e-7;
const MAP_GRAD_ACCEPTABLE: f64 = 1e-6;
const MAP_MAX_ITER: usize = 4000;
const LBFGS_MEMORY: usize = 30;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two-loop recursion: approximate −H⁻¹·grad from recent curvature pairs.
fn lbfgs_direction(history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    let gamma = history
        .back()
        .map(|(s, y, _)| dot(s, y) / dot(y, y))
        .unwrap_or(1.0);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alpha - beta) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Find a local mode of the constrained-space posterior density by
/// quasi-Newton ascent with backtracking line search.
pub fn map_estimate(data: &SubsetData, priors: &Priors, m: f64) -> Result<MapEstimate> {
    let posterior = Posterior::new(data, *priors, m)?;
    let layout = posterior.layout().clone();

    // Start at the independent prior modes (Φ at its prior mean).
    let mut x = vec![0.0; layout.dim()];
    for i in 0..layout.n_articles() {
        x[layout.log_phi(i)] = priors.rate_location.mean;
        x[layout.log_beta(i)] = priors.decay.mode().ln();
    }
    for j in 0..layout.n_journals() {
        x[layout.location(j)] = priors.rate_location.mean;
        x[layout.log_scale(j)] = priors.rate_scale.mode().ln();
        x[layout.log_multiplier(j)] = priors.multiplier.mode().ln();
    }

    // Minimize f = −log density.
    let eval = |x: &[f64]| -> (f64, Vec<f64>) {
        let (v, mut g) = posterior.constrained_value_and_gradient(x);
        for gi in g.iter_mut() {
            *gi = -*gi;
        }
        (-v, g)
    };

    let (mut f, mut g) = eval(&x);
    if !f.is_finite() {
        return Err(Error::numerical(
            "posterior is non-finite at the mode-search starting point",
        ));
    }
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut stalled_once = false;

    while iterations < MAP_MAX_ITER {
        if norm(&g) <= MAP_GRAD_TOL {
            break;
        }
        iterations += 1;

        let mut direction = lbfgs_direction(&history, &g);
        if dot(&direction, &g) >= 0.0 {
            // Curvature got corrupted; fall back to steepest descent.
            history.clear();
            direction = g.iter().map(|gi| -gi).collect();
        }
        let slope = dot(&direction, &g);

        let g_norm = norm(&g);
        // Near the mode the decrease the sufficient-decrease test demands
        // falls below the rounding noise of f, while the analytic gradient
        // stays exact; finish the solve by driving the gradient norm down
        // instead.
        let endgame = g_norm <= 1e-2;

        let mut step = if history.is_empty() {
            (1.0 / g_norm).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&direction)
                .map(|(xi, di)| xi + step * di)
                .collect();
            let (f_trial, g_trial) = eval(&trial);
            if f_trial.is_finite()
                && (f_trial <= f + 1e-4 * step * slope || (endgame && norm(&g_trial) < g_norm))
            {
                accepted = Some((trial, f_trial, g_trial));
                break;
            }
            step *= 0.5;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            if !history.is_empty() && !stalled_once {
                // One restart with fresh curvature before giving up.
                history.clear();
                stalled_once = true;
                continue;
            }
            break;
        };
        stalled_once = false;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }

    let gradient_norm = norm(&g);
    if gradient_norm > MAP_GRAD_ACCEPTABLE {
        return Err(Error::numerical(format!(
            "mode search stopped after {iterations} iterations with gradient norm {gradient_norm:.3e}"
        )));
    }
    Ok(MapEstimate {
        names: layout.constrained_names(),
        values: layout.to_constrained(&x),
        unconstrained: x,
        log_density: -f,
        gradient_norm,
        iterations,
    })
}
