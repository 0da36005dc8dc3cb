use rand::Rng;

use super::slice::{slice_update, SliceConfig};
use crate::error::Result;
use crate::models::GammaPrior;

/// Draws a new standard deviation `τ` for zero-mean normal `values` under a
/// conjugate `Gamma(a, b)` prior on `τ^-2`. With no values this is a draw
/// from the prior.
pub fn gibbs_precision_update<R: Rng + ?Sized>(values: &[f64], prior: &GammaPrior, rng: &mut R) -> f64 {
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    prior.posterior(values.len(), sum_sq).sample_tau(rng)
}

/// Slice-sampling alternative to [`gibbs_precision_update`], operating on
/// `log τ` so the update never leaves the positive half-line.
pub fn slice_precision_update<R: Rng + ?Sized>(
    tau: f64,
    values: &[f64],
    prior: &GammaPrior,
    cfg: &SliceConfig,
    rng: &mut R,
) -> Result<f64> {
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    let post = prior.posterior(values.len(), sum_sq);
    // density of u = log τ: λ = e^{-2u}, |dλ/du| = 2λ
    let log_density = |u: f64| {
        let lambda = (-2.0 * u).exp();
        post.shape * lambda.ln() - lambda / post.scale
    };
    Ok(slice_update(tau.ln(), log_density, cfg, rng)?.value.exp())
}
