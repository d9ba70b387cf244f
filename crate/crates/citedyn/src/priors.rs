//! Prior distributions of the hierarchical model.
//!
//! Each article has a decay time scale `β ~ InverseGamma(2, 1095)`
//! (mode at 365 days) and a latent citation rate
//! `φ ~ LogNormal(Φ_j, ε_j)` given its journal. Each journal has a
//! log-rate location `Φ ~ Normal(0, 1)`, a log-rate scale
//! `ε ~ InverseGamma(2, 1)`, and a citation multiplier
//! `θ ~ Gamma(shape 2, rate 2)` (mean 1: journals neither boost nor
//! suppress citations a priori).
//!
//! Every distribution exposes its log-density both for the constrained
//! variable and for its logarithm (change of variables included), the
//! corresponding derivatives, exact quantiles, and sampling — the
//! quantile and CDF forms double as oracles for prior-recovery tests.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::ContinuousCDF;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Inverse-gamma distribution with shape `α` and scale `b`:
/// `p(x) ∝ x^{−α−1} e^{−b/x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseGamma {
    /// Shape α (> 0).
    pub shape: f64,
    /// Scale b (> 0).
    pub scale: f64,
}

impl InverseGamma {
    /// Log-density at `x > 0`.
    pub fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.scale.ln() - ln_gamma(self.shape) - (self.shape + 1.0) * x.ln()
            - self.scale / x
    }

    /// d/dx of [`Self::log_density`].
    pub fn dlog_density(&self, x: f64) -> f64 {
        -(self.shape + 1.0) / x + self.scale / (x * x)
    }

    /// Log-density of `Y = ln X` at `y` (the change-of-variables Jacobian
    /// `+y` is included): `α ln b − ln Γ(α) − α y − b e^{−y}`.
    pub fn log_density_log_scale(&self, y: f64) -> f64 {
        self.shape * self.scale.ln() - ln_gamma(self.shape) - self.shape * y
            - self.scale * (-y).exp()
    }

    /// d/dy of [`Self::log_density_log_scale`]: `−α + b e^{−y}`.
    pub fn dlog_density_log_scale(&self, y: f64) -> f64 {
        -self.shape + self.scale * (-y).exp()
    }

    /// Mode `b / (α + 1)`.
    pub fn mode(&self) -> f64 {
        self.scale / (self.shape + 1.0)
    }

    /// CDF at `x`, via the complement of the gamma CDF of `1/x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        // b/X is standard gamma (rate 1) when X is inverse-gamma(α, b).
        let gamma = statrs::distribution::Gamma::new(self.shape, 1.0).unwrap();
        1.0 - gamma.cdf(self.scale / x)
    }

    /// Quantile function (inverse CDF).
    pub fn quantile(&self, q: f64) -> f64 {
        // Invert through the rate-1 gamma — its inverse CDF is far better
        // conditioned than one with an extreme rate.
        let gamma = statrs::distribution::Gamma::new(self.shape, 1.0).unwrap();
        self.scale / gamma.inverse_cdf(1.0 - q)
    }

    /// Draw one value: the reciprocal of a gamma draw with rate `b`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let gamma = rand_distr::Gamma::new(self.shape, 1.0 / self.scale).unwrap();
        1.0 / gamma.sample(rng)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.shape > 0.0) || !(self.scale > 0.0) {
            return Err(Error::input(format!(
                "{what}: inverse-gamma shape and scale must be > 0, got ({}, {})",
                self.shape, self.scale
            )));
        }
        Ok(())
    }
}

/// Gamma distribution with shape `α` and *rate* `r`:
/// `p(x) ∝ x^{α−1} e^{−r x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    /// Shape α (> 0).
    pub shape: f64,
    /// Rate r (> 0); the mean is `α / r`.
    pub rate: f64,
}

impl GammaPrior {
    /// Log-density at `x > 0`.
    pub fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }

    /// d/dx of [`Self::log_density`].
    pub fn dlog_density(&self, x: f64) -> f64 {
        (self.shape - 1.0) / x - self.rate
    }

    /// Log-density of `Y = ln X` at `y` (Jacobian included):
    /// `α ln r − ln Γ(α) + α y − r e^{y}`.
    pub fn log_density_log_scale(&self, y: f64) -> f64 {
        self.shape * self.rate.ln() - ln_gamma(self.shape) + self.shape * y
            - self.rate * y.exp()
    }

    /// d/dy of [`Self::log_density_log_scale`]: `α − r e^{y}`.
    pub fn dlog_density_log_scale(&self, y: f64) -> f64 {
        self.shape - self.rate * y.exp()
    }

    /// Mode `(α − 1)/r` for `α ≥ 1`, else 0.
    pub fn mode(&self) -> f64 {
        if self.shape >= 1.0 {
            (self.shape - 1.0) / self.rate
        } else {
            0.0
        }
    }

    /// CDF at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        statrs::distribution::Gamma::new(self.shape, self.rate)
            .unwrap()
            .cdf(x)
    }

    /// Quantile function (inverse CDF).
    pub fn quantile(&self, q: f64) -> f64 {
        // Invert through the rate-1 gamma and rescale.
        statrs::distribution::Gamma::new(self.shape, 1.0)
            .unwrap()
            .inverse_cdf(q)
            / self.rate
    }

    /// Draw one value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rand_distr::Gamma::new(self.shape, 1.0 / self.rate)
            .unwrap()
            .sample(rng)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.shape > 0.0) || !(self.rate > 0.0) {
            return Err(Error::input(format!(
                "{what}: gamma shape and rate must be > 0, got ({}, {})",
                self.shape, self.rate
            )));
        }
        Ok(())
    }
}

/// Normal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    /// Mean μ.
    pub mean: f64,
    /// Standard deviation σ (> 0).
    pub sd: f64,
}

impl NormalPrior {
    /// Log-density at `x`.
    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * (2.0 * std::f64::consts::PI).ln() - self.sd.ln() - 0.5 * z * z
    }

    /// d/dx of [`Self::log_density`]: `−(x − μ)/σ²`.
    pub fn dlog_density(&self, x: f64) -> f64 {
        -(x - self.mean) / (self.sd * self.sd)
    }

    /// Quantile function (inverse CDF).
    pub fn quantile(&self, q: f64) -> f64 {
        statrs::distribution::Normal::new(self.mean, self.sd)
            .unwrap()
            .inverse_cdf(q)
    }

    /// CDF at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        statrs::distribution::Normal::new(self.mean, self.sd)
            .unwrap()
            .cdf(x)
    }

    /// Draw one value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rand_distr::Normal::new(self.mean, self.sd)
            .unwrap()
            .sample(rng)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !self.mean.is_finite() || !(self.sd > 0.0) {
            return Err(Error::input(format!(
                "{what}: normal mean must be finite and sd > 0, got ({}, {})",
                self.mean, self.sd
            )));
        }
        Ok(())
    }
}

/// Log-density of `LogNormal(location, scale)` at `x > 0`.
pub fn lognormal_log_density(x: f64, location: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let z = (x.ln() - location) / scale;
    -x.ln() - scale.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * z * z
}

/// The complete set of hyperpriors used in a fit.
///
/// Every field falls back to its default when deserialized, so a
/// configuration file can override a single prior without restating the
/// rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Prior on each article's decay time scale β (days).
    #[serde(default = "default_decay")]
    pub decay: InverseGamma,
    /// Prior on each journal's log-rate location Φ.
    #[serde(default = "default_rate_location")]
    pub rate_location: NormalPrior,
    /// Prior on each journal's log-rate scale ε.
    #[serde(default = "default_rate_scale")]
    pub rate_scale: InverseGamma,
    /// Prior on each journal's citation multiplier θ.
    #[serde(default = "default_multiplier")]
    pub multiplier: GammaPrior,
}

fn default_decay() -> InverseGamma {
    Priors::default().decay
}

fn default_rate_location() -> NormalPrior {
    Priors::default().rate_location
}

fn default_rate_scale() -> InverseGamma {
    Priors::default().rate_scale
}

fn default_multiplier() -> GammaPrior {
    Priors::default().multiplier
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            // Mode at 365 days; the scale is three years of days.
            decay: InverseGamma {
                shape: 2.0,
                scale: 3.0 * 365.0,
            },
            rate_location: NormalPrior { mean: 0.0, sd: 1.0 },
            rate_scale: InverseGamma {
                shape: 2.0,
                scale: 1.0,
            },
            multiplier: GammaPrior {
                shape: 2.0,
                rate: 2.0,
            },
        }
    }
}

impl Priors {
    /// Check that every component is a proper distribution.
    pub fn validate(&self) -> Result<()> {
        self.decay.validate("decay prior")?;
        self.rate_location.validate("rate-location prior")?;
        self.rate_scale.validate("rate-scale prior")?;
        self.multiplier.validate("multiplier prior")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_modes_match_closed_forms() {
        let priors = Priors::default();
        assert_relative_eq!(priors.decay.mode(), 365.0);
        assert_relative_eq!(priors.multiplier.mode(), 0.5);
        assert_relative_eq!(priors.rate_scale.mode(), 1.0 / 3.0);
        assert_eq!(priors.rate_location.mean, 0.0);
    }

    #[test]
    fn log_scale_densities_are_densities_plus_jacobian() {
        let priors = Priors::default();
        for &y in &[-2.0, 0.0, 3.0, 6.5] {
            let x = f64::exp(y);
            assert_relative_eq!(
                priors.decay.log_density_log_scale(y),
                priors.decay.log_density(x) + y,
                epsilon = 1e-10
            );
            assert_relative_eq!(
                priors.multiplier.log_density_log_scale(y),
                priors.multiplier.log_density(x) + y,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn density_gradients_match_finite_differences() {
        let priors = Priors::default();
        let h = 1e-6;
        for &y in &[-1.5, 0.0, 2.0, 5.9] {
            let fd = (priors.decay.log_density_log_scale(y + h)
                - priors.decay.log_density_log_scale(y - h))
                / (2.0 * h);
            assert_relative_eq!(
                priors.decay.dlog_density_log_scale(y),
                fd,
                max_relative = 1e-5
            );
            let fd = (priors.multiplier.log_density_log_scale(y + h)
                - priors.multiplier.log_density_log_scale(y - h))
                / (2.0 * h);
            assert_relative_eq!(
                priors.multiplier.dlog_density_log_scale(y),
                fd,
                max_relative = 1e-5,
                epsilon = 1e-8
            );
        }
        for &x in &[0.3, 1.0, 400.0] {
            let fd = (priors.decay.log_density(x + h) - priors.decay.log_density(x - h))
                / (2.0 * h);
            assert_relative_eq!(priors.decay.dlog_density(x), fd, max_relative = 1e-4);
        }
        for &x in &[-0.7, 0.0, 1.3] {
            let fd = (priors.rate_location.log_density(x + h)
                - priors.rate_location.log_density(x - h))
                / (2.0 * h);
            assert_relative_eq!(
                priors.rate_location.dlog_density(x),
                fd,
                max_relative = 1e-5,
                epsilon = 1e-6
            );
        }
    }

    #[test]
    fn quantile_and_cdf_are_inverses() {
        let priors = Priors::default();
        for &q in &[0.05, 0.25, 0.5, 0.75, 0.95] {
            assert_relative_eq!(
                priors.decay.cdf(priors.decay.quantile(q)),
                q,
                epsilon = 1e-9
            );
            assert_relative_eq!(
                priors.multiplier.cdf(priors.multiplier.quantile(q)),
                q,
                epsilon = 1e-9
            );
            assert_relative_eq!(
                priors.rate_scale.cdf(priors.rate_scale.quantile(q)),
                q,
                epsilon = 1e-9
            );
            assert_relative_eq!(
                priors.rate_location.cdf(priors.rate_location.quantile(q)),
                q,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn sampling_matches_analytic_quantiles() {
        let priors = Priors::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40_000;

        let mut theta: Vec<f64> = (0..n).map(|_| priors.multiplier.sample(&mut rng)).collect();
        theta.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Gamma(2, 2) has mean 1 and a known median.
        let mean = theta.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "gamma sample mean {mean}");
        let median = theta[n / 2];
        assert!(
            (median - priors.multiplier.quantile(0.5)).abs() < 0.02,
            "gamma sample median {median}"
        );

        let mut beta: Vec<f64> = (0..n).map(|_| priors.decay.sample(&mut rng)).collect();
        beta.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = beta[n / 2];
        let expected = priors.decay.quantile(0.5);
        assert!(
            (median - expected).abs() / expected < 0.03,
            "inverse-gamma sample median {median} vs {expected}"
        );
    }

    #[test]
    fn lognormal_density_matches_normal_on_logs() {
        // LogNormal density at x equals Normal density at ln x minus ln x.
        let (loc, scale) = (0.4, 0.8);
        for &x in &[0.1, 1.0, 3.7] {
            let normal = NormalPrior {
                mean: loc,
                sd: scale,
            };
            assert_relative_eq!(
                lognormal_log_density(x, loc, scale),
                normal.log_density(x.ln()) - x.ln(),
                epsilon = 1e-12
            );
        }
        assert_eq!(lognormal_log_density(-1.0, loc, scale), f64::NEG_INFINITY);
    }

    #[test]
    fn invalid_hyperparameters_are_rejected() {
        let mut priors = Priors::default();
        priors.decay.shape = 0.0;
        assert!(priors.validate().is_err());
        let mut priors = Priors::default();
        priors.multiplier.rate = -1.0;
        assert!(priors.validate().is_err());
        let mut priors = Priors::default();
        priors.rate_location.sd = 0.0;
        assert!(priors.validate().is_err());
        assert!(Priors::default().validate().is_ok());
    }
}
