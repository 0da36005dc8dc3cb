//! Gamma priors on precisions (inverse variances).
//!
//! `Gamma(a, b)` uses the shape/scale convention: density
//! `x^(a-1) e^(-x/b) / (b^a Γ(a))`, mean `a·b`, sd `sqrt(a)·b`. Priors are
//! placed on `λ = τ^-2`, while models are parameterized by the standard
//! deviation `τ`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub scale: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        let g = GammaPrior { shape, scale };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape > 0.0 && self.scale > 0.0 && self.shape.is_finite() && self.scale.is_finite()
        {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "gamma prior needs positive finite shape and scale, got ({}, {})",
                self.shape, self.scale
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn sd(&self) -> f64 {
        self.shape.sqrt() * self.scale
    }

    /// Log density of the precision, including the normalizing constant.
    pub fn ln_density(&self, precision: f64) -> f64 {
        if precision <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.shape - 1.0) * precision.ln()
            - precision / self.scale
            - self.shape * self.scale.ln()
            - statrs::function::gamma::ln_gamma(self.shape)
    }

    /// Conditional for the precision after observing `count` zero-mean normal
    /// values whose squares sum to `sum_sq`.
    pub fn posterior(&self, count: usize, sum_sq: f64) -> GammaPrior {
        GammaPrior {
            shape: self.shape + count as f64 / 2.0,
            scale: 1.0 / (1.0 / self.scale + sum_sq / 2.0),
        }
    }

    pub fn sample_precision<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, self.scale)
            .expect("validated gamma prior")
            .sample(rng)
    }

    pub fn sample_tau<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_precision(rng).powf(-0.5)
    }

    /// Quantile of `τ = λ^-1/2` at probability `q`.
    pub fn tau_quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantile level must lie in (0, 1), got {q}"
            )));
        }
        let dist = GammaDist::new(self.shape, 1.0 / self.scale)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        // τ is decreasing in λ, so the q-quantile of τ is the (1-q)-quantile of λ.
        Ok(dist.inverse_cdf(1.0 - q).powf(-0.5))
    }

    pub fn median_tau(&self) -> f64 {
        self.tau_quantile(0.5).expect("0.5 is a valid level")
    }
}

/// Quantiles of `τ` implied by a gamma prior on `τ^-2`.
pub fn gamma_tau_percentiles(prior: &GammaPrior, levels: &[f64]) -> Result<Vec<f64>> {
    prior.validate()?;
    levels.iter().map(|&q| prior.tau_quantile(q)).collect()
}

/// Hyperprior table shared by all three model families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Prior on `τ0^-2`, governing every intercept.
    pub intercept: GammaPrior,
    /// Prior on `τ^-2` for the flat MNL coefficients.
    pub flat: GammaPrior,
    /// Prior on `τ_m^-2` for the internal node at each depth (root first). The
    /// last entry applies to all deeper nodes.
    pub by_depth: Vec<GammaPrior>,
    /// Prior on `σ_l^-2` when automatic relevance determination is enabled.
    pub ard: Option<GammaPrior>,
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        self.intercept.validate()?;
        self.flat.validate()?;
        if self.by_depth.is_empty() {
            return Err(Error::InvalidConfig("by_depth priors must be nonempty".into()));
        }
        self.by_depth.iter().try_for_each(|g| g.validate())?;
        if let Some(g) = &self.ard {
            g.validate()?;
        }
        Ok(())
    }

    pub fn node(&self, depth: usize) -> GammaPrior {
        self.by_depth[depth.min(self.by_depth.len() - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Upper-tail probability of a standard normal by Simpson's rule.
    fn normal_upper(z: f64) -> f64 {
        let n = 20_000;
        let h = z / n as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(0.0) + pdf(z);
        for i in 1..n {
            s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        0.5 - s * h / 3.0
    }

    /// `τ_q` for shape 1 (exponential precision) or shape 1/2 (scaled χ²₁).
    fn tau_oracle(a: f64, b: f64, q: f64) -> f64 {
        if a == 1.0 {
            return (-b * q.ln()).powf(-0.5);
        }
        assert_eq!(a, 0.5);
        // P(λ > s) = 2 P(Z > sqrt(2s/b)) = q
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * normal_upper(mid) > q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z = 0.5 * (lo + hi);
        (b * z * z / 2.0).powf(-0.5)
    }

    #[test]
    fn percentiles_match_independent_oracle() {
        let priors = [(1.0, 10.0), (1.0, 1.0), (1.0, 5.0), (1.0, 20.0), (1.0, 100.0), (0.5, 20.0), (0.5, 1.0), (0.5, 100.0)];
        for (a, b) in priors {
            let g = GammaPrior::new(a, b).unwrap();
            let got = gamma_tau_percentiles(&g, &[0.025, 0.5, 0.975]).unwrap();
            for (x, q) in got.iter().zip([0.025, 0.5, 0.975]) {
                let want = tau_oracle(a, b, q);
                assert!((x - want).abs() < 1e-7 * want, "Gamma({a},{b}) q={q}: {x} vs {want}");
            }
        }
    }

    #[test]
    fn percentiles_round_to_two_decimals() {
        let cases = [
            ((1.0, 10.0), [0.16, 0.38, 1.99]),
            ((1.0, 5.0), [0.23, 0.54, 2.81]),
            ((1.0, 100.0), [0.05, 0.12, 0.63]),
            ((0.5, 20.0), [0.14, 0.47, 10.09]),
        ];
        for ((a, b), expected) in cases {
            let got = gamma_tau_percentiles(&GammaPrior::new(a, b).unwrap(), &[0.025, 0.5, 0.975]).unwrap();
            for (x, e) in got.iter().zip(expected) {
                assert!((x - e).abs() <= 0.005, "Gamma({a},{b}): {got:?}");
            }
        }
    }

    #[test]
    fn exponential_case_closed_form() {
        // shape 1: λ ~ Exp(mean b), so median λ = b ln 2
        let g = GammaPrior::new(1.0, 1.0).unwrap();
        let want = (2f64.ln()).powf(-0.5);
        assert!((g.median_tau() - want).abs() < 1e-9);
    }

    #[test]
    fn invalid_levels_and_priors() {
        let g = GammaPrior::new(1.0, 1.0).unwrap();
        assert!(gamma_tau_percentiles(&g, &[0.0]).is_err());
        assert!(gamma_tau_percentiles(&g, &[1.0]).is_err());
        assert!(GammaPrior::new(0.0, 1.0).is_err());
        assert!(GammaPrior::new(1.0, -2.0).is_err());
    }

    #[test]
    fn moments() {
        let g = GammaPrior::new(4.0, 0.5).unwrap();
        assert_eq!(g.mean(), 2.0);
        assert_eq!(g.sd(), 1.0);
    }

    #[test]
    fn conjugate_update_algebra() {
        let g = GammaPrior::new(1.0, 1.0).unwrap();
        let post = g.posterior(1, 4.0);
        assert!((post.shape - 1.5).abs() < 1e-15);
        assert!((post.scale - 1.0 / 3.0).abs() < 1e-15);

        let g = GammaPrior::new(1.0, 10.0).unwrap();
        let post = g.posterior(4, 0.0);
        assert_eq!(post, GammaPrior::new(3.0, 10.0).unwrap());
    }
}
