//! Convergence diagnostics for multi-chain draws.
//!
//! Split R-hat compares within- and between-half-chain variances; the
//! effective sample size discounts for autocorrelation using paired
//! autocorrelation sums truncated where they first turn negative and
//! forced monotone. Exclusion from aggregate reporting is driven solely
//! by divergences: any divergent transition marks the subset excluded
//! (an override flag exists downstream); R-hat is advisory.

use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::stats::{mean, sample_variance};

/// R-hat above this value raises an advisory (non-excluding) warning.
pub const RHAT_WARNING_THRESHOLD: f64 = 1.01;

/// Per-parameter convergence measures and the exclusion decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Split R-hat per parameter; `None` when fewer than two chains ran.
    pub rhat: Vec<Option<f64>>,
    /// Effective sample size per parameter; `None` when undefined
    /// (degenerate draws).
    pub ess: Vec<Option<f64>>,
    /// Divergent transitions across all chains (post-warmup).
    pub divergence_count: usize,
    /// Whether the subset must be dropped from aggregate results.
    pub excluded: bool,
    /// Whether any parameter's R-hat exceeds the advisory threshold.
    pub rhat_warning: bool,
}

/// Split each sequence in half, discarding the middle element of an
/// odd-length sequence.
fn split_sequences(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for chain in chains {
        let n = chain.len();
        let half = n / 2;
        out.push(&chain[..half]);
        out.push(&chain[n - half..]);
    }
    out
}

/// Split R-hat of one parameter. `None` if fewer than two chains, any
/// half-chain is shorter than 2 draws, or the draws are constant.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    let seqs = split_sequences(chains);
    let n = seqs.iter().map(|s| s.len()).min().unwrap_or(0);
    if n < 2 {
        return None;
    }
    let means: Vec<f64> = seqs.iter().map(|s| mean(&s[..n])).collect();
    let vars: Vec<f64> = seqs.iter().map(|s| sample_variance(&s[..n])).collect();
    let within = mean(&vars);
    let between = n as f64 * sample_variance(&means);
    if within <= 0.0 {
        return None;
    }
    let n = n as f64;
    let var_plus = (n - 1.0) / n * within + between / n;
    Some((var_plus / within).sqrt())
}

/// Biased (1/n) autocovariance at every lag.
fn autocovariance(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let center = mean(xs);
    let demeaned: Vec<f64> = xs.iter().map(|x| x - center).collect();
    let mut acov = vec![0.0; n];
    for (lag, slot) in acov.iter_mut().enumerate() {
        let mut sum = 0.0;
        for i in 0..n - lag {
            sum += demeaned[i] * demeaned[i + lag];
        }
        *slot = sum / n as f64;
    }
    acov
}

/// Effective sample size of one parameter across chains, computed on
/// split half-chains. `None` for degenerate (constant) draws.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Option<f64> {
    let seqs = split_sequences(chains);
    let n = seqs.iter().map(|s| s.len()).min().unwrap_or(0);
    if n < 4 {
        return None;
    }
    let m = seqs.len();
    let acovs: Vec<Vec<f64>> = seqs.iter().map(|s| autocovariance(&s[..n])).collect();
    let chain_means: Vec<f64> = seqs.iter().map(|s| mean(&s[..n])).collect();
    let nf = n as f64;
    let within = mean(&acovs.iter().map(|a| a[0] * nf / (nf - 1.0)).collect::<Vec<_>>());
    if within <= 0.0 {
        return None;
    }
    let between_term = if m > 1 {
        sample_variance(&chain_means)
    } else {
        0.0
    };
    let var_plus = within * (nf - 1.0) / nf + between_term;

    let mean_acov = |lag: usize| -> f64 { mean(&acovs.iter().map(|a| a[lag]).collect::<Vec<_>>()) };
    let rho = |lag: usize| -> f64 { 1.0 - (within - mean_acov(lag)) / var_plus };

    // Sum paired autocorrelations (ρ₀ ≡ 1) while the pairs stay positive,
    // then make the pair sums non-increasing before totalling:
    // τ = −1 + 2 Σ_k (ρ_{2k} + ρ_{2k+1}).
    let mut pairs = vec![1.0 + rho(1)];
    let mut lag = 2;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        pairs.push(pair);
        lag += 2;
    }
    let mut running_min = f64::INFINITY;
    let mut sum = 0.0;
    for pair in pairs {
        running_min = running_min.min(pair);
        sum += running_min;
    }
    let tau = 2.0 * sum - 1.0;
    if tau <= 0.0 {
        return None;
    }
    let total = (m * n) as f64;
    Some((total / tau).min(total * total.log10()))
}

/// Compute per-parameter diagnostics and apply the exclusion policy.
pub fn diagnostics(draws: &PosteriorDraws) -> Diagnostics {
    let n_params = draws.parameter_names.len();
    let mut rhat = Vec::with_capacity(n_params);
    let mut ess = Vec::with_capacity(n_params);
    for k in 0..n_params {
        let per_chain: Vec<Vec<f64>> = draws
            .chains
            .iter()
            .map(|c| c.draws.iter().map(|row| row[k]).collect())
            .collect();
        rhat.push(split_rhat(&per_chain));
        ess.push(effective_sample_size(&per_chain));
    }
    let divergence_count = draws.divergence_count();
    let rhat_warning = rhat
        .iter()
        .flatten()
        .any(|&r| r > RHAT_WARNING_THRESHOLD);
    Diagnostics {
        rhat,
        ess,
        divergence_count,
        excluded: divergence_count > 0,
        rhat_warning,
    }
}
