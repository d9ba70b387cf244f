//! Core mathematics of the citation-dynamics model.
//!
//! Citations accrue in discrete daily steps, with day `t = 0` the day the
//! preprint is posted. On day `t` the number of new citations `c(t)` is
//! Poisson distributed with mean
//!
//! ```text
//! λ(t) · f(t) · (m + C(t − 1))
//! ```
//!
//! where
//!
//! * `λ(t)` is the article's effective citation rate: the latent rate `φ`
//!   up to and including the publication day `T′`, and `φ·θ` afterwards,
//!   with `θ` the journal citation multiplier;
//! * `f(t) = e^{−t/β} − e^{−(t+1)/β}` is an exponentially decaying
//!   per-day attention mass with time scale `β` (in days), summing to 1
//!   over all days;
//! * `m` is the initial attractiveness, so uncited articles still attract
//!   citations;
//! * `C(t − 1)` is the cumulative citation count before day `t` — the
//!   rich-get-richer term.
//!
//! This module holds the deterministic consequences of that definition:
//! the decay mass and its cumulative form (with log-space variants and
//! β-derivatives for likelihood work), the piecewise effective rate, exact
//! and approximate expected cumulative citation counts, the variance
//! recursion, and the day at which the expected instantaneous citation
//! rate peaks. Everything here is a pure function over value types.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-article model parameters and timeline.
///
/// The timeline is expressed in whole days since the preprint was posted:
/// the article is published on day `preprint_duration` (so that day itself
/// still counts as pre-publication) and observed through day `horizon`
/// inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArticleParams {
    /// Latent citation rate φ of the article (≥ 0, dimensionless).
    pub phi: f64,
    /// Decay time scale β in days (> 0).
    pub beta: f64,
    /// Days spent as a preprint before publication, `T′` (the boundary day
    /// itself is pre-publication).
    pub preprint_duration: u32,
    /// Last observed day `T` (≥ `preprint_duration`).
    pub horizon: u32,
}

impl ArticleParams {
    /// Validated constructor.
    pub fn new(phi: f64, beta: f64, preprint_duration: u32, horizon: u32) -> Result<Self> {
        let params = ArticleParams {
            phi,
            beta,
            preprint_duration,
            horizon,
        };
        params.validate()?;
        Ok(params)
    }

    /// Check the type invariants: `phi ≥ 0`, `beta > 0`, and
    /// `preprint_duration ≤ horizon`.
    pub fn validate(&self) -> Result<()> {
        if !(self.phi >= 0.0) {
            return Err(Error::input(format!(
                "latent citation rate must be ≥ 0, got {}",
                self.phi
            )));
        }
        if !(self.beta > 0.0) {
            return Err(Error::input(format!(
                "decay time scale must be > 0, got {}",
                self.beta
            )));
        }
        if self.preprint_duration > self.horizon {
            return Err(Error::input(format!(
                "preprint duration {} exceeds horizon {}",
                self.preprint_duration, self.horizon
            )));
        }
        Ok(())
    }

    /// Effective citation rate λ(t): `φ` while the article is a preprint
    /// (t ≤ T′) and `φ·θ` once published (t > T′). The only discontinuity
    /// is at `t = T′ + 1`.
    pub fn effective_rate(&self, t: u32, theta: f64) -> f64 {
        if t <= self.preprint_duration {
            self.phi
        } else {
            self.phi * theta
        }
    }
}

/// Per-journal parameters of the hierarchical layer.
///
/// Latent citation rates of a journal's articles follow
/// `φ ~ LogNormal(location, scale)`, so the journal's median latent rate
/// is `exp(location)`. After publication every rate is multiplied by the
/// journal's citation multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JournalParams {
    /// Location Φ of the log-normal latent-rate distribution (log-rate
    /// units; the median latent rate is `e^Φ`).
    pub location: f64,
    /// Scale ε of the log-normal latent-rate distribution (> 0).
    pub scale: f64,
    /// Journal citation multiplier θ (> 0) applied after publication.
    pub multiplier: f64,
}

impl JournalParams {
    /// Validated constructor.
    pub fn new(location: f64, scale: f64, multiplier: f64) -> Result<Self> {
        let params = JournalParams {
            location,
            scale,
            multiplier,
        };
        params.validate()?;
        Ok(params)
    }

    /// Check the type invariants: finite location, `scale > 0`,
    /// `multiplier > 0`.
    pub fn validate(&self) -> Result<()> {
        if !self.location.is_finite() {
            return Err(Error::input(format!(
                "log-rate location must be finite, got {}",
                self.location
            )));
        }
        if !(self.scale > 0.0) {
            return Err(Error::input(format!(
                "log-rate scale must be > 0, got {}",
                self.scale
            )));
        }
        if !(self.multiplier > 0.0) {
            return Err(Error::input(format!(
                "citation multiplier must be > 0, got {}",
                self.multiplier
            )));
        }
        Ok(())
    }

    /// Median latent citation rate `e^Φ` of the journal's articles.
    pub fn median_rate(&self) -> f64 {
        self.location.exp()
    }
}

/// Fixed model-level constants shared by every article in a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Initial attractiveness `m` (> 0): the constant added to the
    /// cumulative citation count in the Poisson mean.
    pub initial_attractiveness: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            initial_attractiveness: 30.0,
        }
    }
}

impl ModelConfig {
    /// Check the type invariant `m > 0`.
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_attractiveness > 0.0) {
            return Err(Error::input(format!(
                "initial attractiveness must be > 0, got {}",
                self.initial_attractiveness
            )));
        }
        Ok(())
    }
}

/// Per-day decay mass `f(t) = e^{−t/β} − e^{−(t+1)/β}`.
///
/// Strictly decreasing in `t` and sums to 1 over `t = 0, 1, 2, …`.
/// Computed as `e^{−t/β}·(1 − e^{−1/β})` so no cancellation occurs.
///
/// # Panics
/// If `beta ≤ 0` or is not finite.
pub fn decay_density(t: u32, beta: f64) -> f64 {
    assert!(beta > 0.0 && beta.is_finite(), "decay time scale must be a positive number");
    (-(t as f64) / beta).exp() * (-(-1.0 / beta).exp_m1())
}

/// Natural log of [`decay_density`], computed directly as
/// `−t/β + ln(1 − e^{−1/β})` so it stays finite far into the tail where
/// `f(t)` itself underflows.
pub fn log_decay_density(t: u32, beta: f64) -> f64 {
    assert!(beta > 0.0 && beta.is_finite(), "decay time scale must be a positive number");
    -(t as f64) / beta + (-(-1.0 / beta).exp_m1()).ln()
}

/// Cumulative decay mass through the end of day `t`:
/// `F(t) = Σ_{τ=0}^{t} f(τ) = 1 − e^{−(t+1)/β}`.
///
/// Nondecreasing in `t` with limit 1.
///
/// # Panics
/// If `beta ≤ 0` or is not finite.
pub fn decay_cumulative(t: u32, beta: f64) -> f64 {
    assert!(beta > 0.0 && beta.is_finite(), "decay time scale must be a positive number");
    -(-((t as f64) + 1.0) / beta).exp_m1()
}

/// Decay mass strictly before day `t`: `Σ_{τ<t} f(τ) = 1 − e^{−t/β}`,
/// i.e. `F(t − 1)` extended to `t = 0` where it is exactly 0.
///
/// Together with [`decay_cumulative`] this expresses any inclusive day
/// range: `Σ_{τ=a}^{b} f(τ) = decay_cumulative(b) − decay_mass_before(a)`.
pub fn decay_mass_before(t: u32, beta: f64) -> f64 {
    assert!(beta > 0.0 && beta.is_finite(), "decay time scale must be a positive number");
    -(-(t as f64) / beta).exp_m1()
}

/// ∂/∂β of [`log_decay_density`]: `(t − q)/β²` with `q = 1/(e^{1/β} − 1)`.
pub fn dlog_decay_density_dbeta(t: u32, beta: f64) -> f64 {
    let q = 1.0 / (1.0 / beta).exp_m1();
    (t as f64 - q) / (beta * beta)
}

/// ∂/∂β of [`decay_cumulative`]: `−((t+1)/β²)·e^{−(t+1)/β}`.
pub fn ddecay_cumulative_dbeta(t: u32, beta: f64) -> f64 {
    let u = (t as f64 + 1.0) / beta;
    -(u / beta) * (-u).exp()
}

/// ∂/∂β of [`decay_mass_before`]: `−(t/β²)·e^{−t/β}`.
pub fn ddecay_mass_before_dbeta(t: u32, beta: f64) -> f64 {
    let u = t as f64 / beta;
    -(u / beta) * (-u).exp()
}

/// Expected cumulative citations `E(C(t))` by iterating the one-day
/// recursion
///
/// ```text
/// E(C(t)) = E(C(t − 1)) + λ(t)·f(t)·(m + E(C(t − 1)))
/// ```
///
/// from `E(C(−1)) = 0`. This is the slow, trivially-trustworthy form used
/// as the oracle for [`expected_citations_exact`].
pub fn expected_citations_recursion(t: u32, article: &ArticleParams, theta: f64, m: f64) -> f64 {
    let mut expected = 0.0;
    for day in 0..=t {
        let mass = article.effective_rate(day, theta) * decay_density(day, article.beta);
        expected += mass * (m + expected);
    }
    expected
}

/// Expected cumulative citations `E(C(t))` via the closed-form product
/// solution of the recursion,
///
/// ```text
/// E(C(t)) = m·(∏_{τ=0}^{t} (1 + λ(τ)·f(τ)) − 1),
/// ```
///
/// evaluated stably as `m·expm1(Σ ln1p(λ(τ)f(τ)))`.
pub fn expected_citations_exact(t: u32, article: &ArticleParams, theta: f64, m: f64) -> f64 {
    let mut log_product = 0.0;
    for day in 0..=t {
        let mass = article.effective_rate(day, theta) * decay_density(day, article.beta);
        log_product += mass.ln_1p();
    }
    m * log_product.exp_m1()
}

/// Full expected cumulative citation curve for days `0..=horizon`
/// (`horizon + 1` values), sharing one pass of the product form.
pub fn expected_citations_curve(article: &ArticleParams, theta: f64, m: f64) -> Vec<f64> {
    let mut curve = Vec::with_capacity(article.horizon as usize + 1);
    let mut log_product = 0.0;
    for day in 0..=article.horizon {
        let mass = article.effective_rate(day, theta) * decay_density(day, article.beta);
        log_product += mass.ln_1p();
        curve.push(m * log_product.exp_m1());
    }
    curve
}

/// First-order (Taylor) approximations of the expected citation counts.
///
/// Valid when every per-day mass `λ(t)f(t)` is small, so that
/// `ln(1 + λf) ≈ λf` and the product solution collapses into cumulative
/// decay masses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxExpectations {
    /// Expected pre-publication citations `E(C′) ≈ m(e^{φF(T′)} − 1)`.
    pub pre_publication: f64,
    /// Expected post-publication citations
    /// `E(C) ≈ m·e^{φF(T′)}·(e^{φθ(F(T) − F(T′))} − 1)`.
    pub post_publication: f64,
    /// Long-term limit `m(e^{φθ} − 1)` — the expected eventual citation
    /// count of an article published early in its attention window.
    pub long_term: f64,
}

/// Compute the three Taylor-approximation expectations; see
/// [`ApproxExpectations`] for the formulas.
pub fn expected_citations_approx(article: &ArticleParams, theta: f64, m: f64) -> ApproxExpectations {
    let mass_pre = decay_cumulative(article.preprint_duration, article.beta);
    let mass_post = decay_cumulative(article.horizon, article.beta) - mass_pre;
    let pre = m * (article.phi * mass_pre).exp_m1();
    let post = m
        * (article.phi * mass_pre).exp()
        * (article.phi * theta * mass_post).exp_m1();
    ApproxExpectations {
        pre_publication: pre,
        post_publication: post,
        long_term: m * (article.phi * theta).exp_m1(),
    }
}

/// Approximate expected number of *new* citations on day `t` for an
/// unpublished article (single-regime rate φ):
///
/// ```text
/// E(c(t)) ≈ (m·φ/β)·exp(φ(1 − e^{−t/β}) − t/β).
/// ```
///
/// This is the continuous-time envelope whose argmax [`peak_day`] returns
/// in closed form.
pub fn instantaneous_mean_approx(t: f64, phi: f64, beta: f64, m: f64) -> f64 {
    (m * phi / beta) * (phi * (-(-t / beta).exp_m1()) - t / beta).exp()
}

/// Day at which the expected instantaneous citation rate peaks:
/// `t* = β·ln φ` when `φ > 1`. Returns `None` when `φ ≤ 1`, in which case
/// the expected rate is monotone decreasing from day 0.
pub fn peak_day(phi: f64, beta: f64) -> Option<f64> {
    if phi > 1.0 {
        Some(beta * phi.ln())
    } else {
        None
    }
}

/// One step of the cumulative-count variance recursion,
///
/// ```text
/// Var(C(t)) = Var(C(t − 1)) + Var(c(t)) + 2·Cov(C(t − 1), c(t)),
/// ```
///
/// where for per-day mass `x = rate·decay`
/// `Var(c(t)) = x·(m + E(C(t − 1))) + x²·Var(C(t − 1))` (Poisson noise
/// plus the propagated uncertainty of the attachment term). The caller
/// supplies the covariance term; the exact value is
/// `Cov(C(t − 1), c(t)) = x·Var(C(t − 1))`, which [`mean_variance_curve`]
/// uses.
///
/// # Panics
/// If either variance input is negative.
pub fn variance_recursion_step(
    prev_var: f64,
    prev_mean: f64,
    rate: f64,
    decay: f64,
    m: f64,
    covariance: f64,
) -> f64 {
    assert!(prev_var >= 0.0, "variance input must be nonnegative");
    let mass = rate * decay;
    let increment_var = mass * (m + prev_mean) + mass * mass * prev_var;
    assert!(increment_var >= 0.0, "variance input must be nonnegative");
    prev_var + increment_var + 2.0 * covariance
}

/// Mean and variance of the cumulative citation count on one day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanVariance {
    /// `E(C(t))`.
    pub mean: f64,
    /// `Var(C(t))`.
    pub variance: f64,
}

/// Exact mean and variance of `C(t)` for days `0..=horizon`, propagating
/// both the expectation recursion and the variance recursion with the
/// exact covariance term `Cov(C(t − 1), c(t)) = λ(t)f(t)·Var(C(t − 1))`.
pub fn mean_variance_curve(article: &ArticleParams, theta: f64, m: f64) -> Vec<MeanVariance> {
    let mut curve = Vec::with_capacity(article.horizon as usize + 1);
    let mut mean = 0.0;
    let mut var = 0.0;
    for day in 0..=article.horizon {
        let rate = article.effective_rate(day, theta);
        let decay = decay_density(day, article.beta);
        let covariance = rate * decay * var;
        var = variance_recursion_step(var, mean, rate, decay, m, covariance);
        mean += rate * decay * (m + mean);
        curve.push(MeanVariance {
            mean,
            variance: var,
        });
    }
    curve
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn article(phi: f64, beta: f64, t_prime: u32, horizon: u32) -> ArticleParams {
        ArticleParams::new(phi, beta, t_prime, horizon).unwrap()
    }

    #[test]
    fn decay_density_matches_closed_form_at_day_zero() {
        // 1 − e^{−1/365}
        assert_abs_diff_eq!(decay_density(0, 365.0), 0.00273598, epsilon = 1e-8);
    }

    #[test]
    fn decay_density_is_strictly_decreasing_and_vanishes() {
        let mut prev = decay_density(0, 200.0);
        for t in 1..2000 {
            let cur = decay_density(t, 200.0);
            assert!(cur < prev, "decay mass must fall strictly at t={t}");
            prev = cur;
        }
        assert!(decay_density(200_000, 200.0) < 1e-300);
    }

    #[test]
    fn decay_cumulative_hits_one_minus_inverse_e_after_one_time_scale() {
        // F(364) with β = 365 is 1 − e^{−1}.
        assert_abs_diff_eq!(decay_cumulative(364, 365.0), 0.632121, epsilon = 1e-6);
    }

    #[test]
    fn decay_cumulative_at_zero_is_the_first_density_term() {
        assert_relative_eq!(
            decay_cumulative(0, 42.0),
            decay_density(0, 42.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn decay_mass_before_day_zero_is_zero() {
        assert_eq!(decay_mass_before(0, 365.0), 0.0);
    }

    #[test]
    fn log_decay_density_agrees_with_direct_log() {
        for &(t, beta) in &[(0u32, 365.0), (10, 30.0), (1000, 1095.0)] {
            assert_relative_eq!(
                log_decay_density(t, beta),
                decay_density(t, beta).ln(),
                epsilon = 1e-12
            );
        }
        // Far in the tail the direct density underflows but the log form
        // stays finite.
        assert!(decay_density(1_000_000, 2.0) == 0.0);
        assert!(log_decay_density(1_000_000, 2.0).is_finite());
    }

    #[test]
    fn beta_derivatives_match_central_differences() {
        let h = 1e-4;
        for &(t, beta) in &[(0u32, 365.0), (100, 180.0), (2000, 1095.0), (5, 30.0)] {
            let fd = (log_decay_density(t, beta + h) - log_decay_density(t, beta - h)) / (2.0 * h);
            assert_relative_eq!(dlog_decay_density_dbeta(t, beta), fd, max_relative = 1e-6);

            let fd = (decay_cumulative(t, beta + h) - decay_cumulative(t, beta - h)) / (2.0 * h);
            assert_relative_eq!(ddecay_cumulative_dbeta(t, beta), fd, max_relative = 1e-6);

            if t > 0 {
                let fd =
                    (decay_mass_before(t, beta + h) - decay_mass_before(t, beta - h)) / (2.0 * h);
                assert_relative_eq!(ddecay_mass_before_dbeta(t, beta), fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn effective_rate_switches_the_day_after_publication() {
        let a = article(0.5, 365.0, 100, 2000);
        // The boundary day itself is still pre-publication.
        assert_eq!(a.effective_rate(100, 3.0), 0.5);
        assert_eq!(a.effective_rate(101, 3.0), 1.5);
    }

    #[test]
    fn unit_multiplier_leaves_the_rate_constant() {
        let a = article(0.7, 365.0, 50, 300);
        for t in 0..300 {
            assert_eq!(a.effective_rate(t, 1.0), 0.7);
        }
    }

    #[test]
    fn zero_rate_article_expects_zero_citations() {
        let a = article(0.0, 365.0, 100, 2000);
        assert_eq!(expected_citations_exact(2000, &a, 5.0, 30.0), 0.0);
        assert_eq!(expected_citations_recursion(2000, &a, 5.0, 30.0), 0.0);
    }

    #[test]
    fn first_recursion_step_is_m_times_first_decay_mass() {
        // E(C(0)) = φ·f(0)·m = 30·f(0) for φ = 1.
        let a = article(1.0, 365.0, 10, 2000);
        assert_abs_diff_eq!(
            expected_citations_recursion(0, &a, 2.0, 30.0),
            0.082079,
            epsilon = 1e-6
        );
    }

    #[test]
    fn product_form_equals_iterated_recursion() {
        let mut rng_state = 88172645463325252u64;
        let mut next = move || {
            // xorshift64 — deterministic parameter scrambling for the test.
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let phi = 5.0 * next();
            let beta = 30.0 + 1500.0 * next();
            let t_prime = (730.0 * next()) as u32;
            let horizon = t_prime + (1825.0 * next()) as u32;
            let theta = 0.1 + 10.0 * next();
            let m = 1.0 + 60.0 * next();
            let a = article(phi, beta, t_prime, horizon);
            let exact = expected_citations_exact(horizon, &a, theta, m);
            let recur = expected_citations_recursion(horizon, &a, theta, m);
            assert_relative_eq!(exact, recur, max_relative = 1e-12);
        }
    }

    #[test]
    fn curve_endpoint_matches_single_evaluation() {
        let a = article(1.3, 400.0, 200, 1500);
        let curve = expected_citations_curve(&a, 2.5, 30.0);
        assert_eq!(curve.len(), 1501);
        assert_relative_eq!(
            curve[1500],
            expected_citations_exact(1500, &a, 2.5, 30.0),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            curve[0],
            expected_citations_exact(0, &a, 2.5, 30.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn long_term_limit_fixture() {
        // m = 30, φ = 0.1, θ = 5 → 30(e^{0.5} − 1) ≈ 19.462.
        let a = article(0.1, 365.0, 0, 0);
        let approx = expected_citations_approx(&a, 5.0, 30.0);
        assert_abs_diff_eq!(approx.long_term, 19.462, epsilon = 1e-3);
    }

    #[test]
    fn highly_cited_article_maps_to_modest_count_without_multiplier() {
        // An article expecting ≈200 long-term citations under θ = 5 would
        // have collected about 15 had its rate never been multiplied.
        let m = 30.0;
        let theta = 5.0;
        let phi = (200.0_f64 / m).ln_1p() / theta;
        let a = article(phi, 365.0, 0, 0);
        let with_journal = expected_citations_approx(&a, theta, m).long_term;
        let without = expected_citations_approx(&a, 1.0, m).long_term;
        assert_relative_eq!(with_journal, 200.0, epsilon = 1e-9);
        assert!((without - 15.0).abs() <= 1.0, "got {without}");
    }

    #[test]
    fn unit_multiplier_collapses_pre_plus_post_to_single_regime() {
        let a = article(0.8, 365.0, 180, 1825);
        let approx = expected_citations_approx(&a, 1.0, 30.0);
        let total = approx.pre_publication + approx.post_publication;
        let single = 30.0 * (0.8 * decay_cumulative(1825, 365.0)).exp_m1();
        assert_relative_eq!(total, single, epsilon = 1e-12);
    }

    #[test]
    fn taylor_approximation_tracks_exact_value_when_masses_are_small() {
        // On a grid where every per-day mass λf ≤ 0.05 and the total decay
        // mass is moderate, the relative Taylor error is below the largest
        // per-day mass.
        for &phi in &[0.2, 0.5, 1.0] {
            for &theta in &[1.0, 2.0] {
                for &beta in &[365.0, 1095.0] {
                    let a = article(phi, beta, 180, 1825);
                    let max_mass = phi * theta * decay_density(0, beta);
                    assert!(max_mass <= 0.05);
                    let approx = expected_citations_approx(&a, theta, 30.0);
                    let total_approx = approx.pre_publication + approx.post_publication;
                    let exact = expected_citations_exact(1825, &a, theta, 30.0);
                    let rel = (total_approx - exact).abs() / exact;
                    assert!(
                        rel <= max_mass,
                        "relative error {rel} exceeds mass bound {max_mass}"
                    );
                }
            }
        }
    }

    #[test]
    fn peak_day_closed_form() {
        let peak = peak_day(std::f64::consts::E, 365.0).unwrap();
        assert_relative_eq!(peak, 365.0, epsilon = 1e-9);
        assert_eq!(peak_day(0.5, 365.0), None);
        assert_eq!(peak_day(1.0, 365.0), None);
        // t* is linear in β.
        let t1 = peak_day(2.0, 200.0).unwrap();
        let t2 = peak_day(2.0, 400.0).unwrap();
        assert_relative_eq!(t2, 2.0 * t1, epsilon = 1e-12);
    }

    #[test]
    fn peak_day_matches_numeric_argmax_of_instantaneous_mean() {
        for &(phi, beta) in &[(1.5, 365.0), (std::f64::consts::E, 180.0), (5.0, 1095.0)] {
            let predicted = peak_day(phi, beta).unwrap();
            let argmax = (0..20_000)
                .map(|t| (t, instantaneous_mean_approx(t as f64, phi, beta, 30.0)))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap()
                .0 as f64;
            assert!(
                (argmax - predicted).abs() <= 1.0,
                "argmax {argmax} vs closed form {predicted}"
            );
        }
    }

    #[test]
    fn variance_recursion_base_case_is_poisson() {
        // Day 0: no history, so Var(C(0)) = λ(0)f(0)m.
        let v = variance_recursion_step(0.0, 0.0, 1.2, decay_density(0, 365.0), 30.0, 0.0);
        assert_relative_eq!(v, 1.2 * decay_density(0, 365.0) * 30.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_covariance_reduces_to_independent_increments() {
        let mass = 0.01;
        let v = variance_recursion_step(4.0, 10.0, 1.0, mass, 30.0, 0.0);
        assert_relative_eq!(
            v,
            4.0 + mass * 40.0 + mass * mass * 4.0,
            epsilon = 1e-12
        );
    }

    #[test]
    #[should_panic(expected = "nonnegative")]
    fn negative_variance_input_is_rejected() {
        variance_recursion_step(-1.0, 0.0, 1.0, 0.001, 30.0, 0.0);
    }

    #[test]
    fn cumulative_variance_dominates_the_mean() {
        // The attachment term makes C(t) over-dispersed: Var ≥ mean, with
        // equality only at t = 0.
        let a = article(2.0, 365.0, 365, 3650);
        let curve = mean_variance_curve(&a, 2.0, 30.0);
        assert_relative_eq!(curve[0].variance, curve[0].mean, epsilon = 1e-12);
        for mv in &curve[1..] {
            assert!(mv.variance >= mv.mean);
        }
        assert!(curve.last().unwrap().variance > 1.5 * curve.last().unwrap().mean);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ArticleParams::new(-0.1, 365.0, 0, 10).is_err());
        assert!(ArticleParams::new(1.0, 0.0, 0, 10).is_err());
        assert!(ArticleParams::new(1.0, 365.0, 11, 10).is_err());
        assert!(JournalParams::new(0.0, 0.0, 1.0).is_err());
        assert!(JournalParams::new(0.0, 1.0, 0.0).is_err());
        assert!(JournalParams::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(ModelConfig {
            initial_attractiveness: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn journal_median_rate_is_exp_location() {
        let j = JournalParams::new(0.2_f64.ln(), 0.5, 2.0).unwrap();
        assert_relative_eq!(j.median_rate(), 0.2, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn density_telescopes_to_cumulative(
            n in 0u32..3000,
            beta in 1.0f64..2000.0,
        ) {
            let sum: f64 = (0..=n).map(|t| decay_density(t, beta)).sum();
            prop_assert!((sum - decay_cumulative(n, beta)).abs() < 1e-12);
        }

        #[test]
        fn cumulative_is_monotone_and_bounded(
            t in 0u32..5000,
            beta in 1.0f64..2000.0,
        ) {
            let here = decay_cumulative(t, beta);
            let next = decay_cumulative(t + 1, beta);
            prop_assert!(here <= next);
            prop_assert!((0.0..=1.0).contains(&here));
        }

        #[test]
        fn density_is_cumulative_difference(
            t in 1u32..5000,
            beta in 1.0f64..2000.0,
        ) {
            let diff = decay_cumulative(t, beta) - decay_cumulative(t - 1, beta);
            prop_assert!((diff - decay_density(t, beta)).abs() < 1e-12);
        }

        #[test]
        fn expected_citations_monotone_in_all_arguments(
            phi in 0.01f64..4.0,
            beta in 30.0f64..1500.0,
            theta in 0.2f64..8.0,
            m in 1.0f64..60.0,
            t_prime in 0u32..500,
            extra in 1u32..2000,
        ) {
            let horizon = t_prime + extra;
            let a = article(phi, beta, t_prime, horizon);
            let base = expected_citations_exact(horizon, &a, theta, m);
            // Monotone in t.
            prop_assert!(expected_citations_exact(horizon - 1, &a, theta, m) <= base);
            // Monotone in φ.
            let bumped = article(phi * 1.1, beta, t_prime, horizon);
            prop_assert!(expected_citations_exact(horizon, &bumped, theta, m) >= base);
            // Monotone in θ.
            prop_assert!(expected_citations_exact(horizon, &a, theta * 1.1, m) >= base);
            // Monotone in m.
            prop_assert!(expected_citations_exact(horizon, &a, theta, m * 1.1) >= base);
        }

        #[test]
        fn variance_curve_never_drops_below_mean(
            phi in 0.1f64..3.0,
            beta in 50.0f64..1500.0,
            theta in 0.5f64..5.0,
        ) {
            let a = article(phi, beta, 100, 600);
            for mv in mean_variance_curve(&a, theta, 30.0) {
                prop_assert!(mv.variance >= mv.mean - 1e-9);
            }
        }
    }
}
