use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub leapfrog_steps: usize,
    pub step_size: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            leapfrog_steps: 500,
            step_size: 0.02,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.leapfrog_steps < 1 || !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "HMC needs at least one leapfrog step and a positive step size, got {:?}",
                self
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmcOutcome {
    pub position: Vec<f64>,
    pub accepted: bool,
    /// Change in total energy over the trajectory (`NaN` if it diverged).
    pub energy_change: f64,
}

/// Runs `steps` leapfrog steps in place. `target` returns the log density
/// and writes its gradient. Returns the log density at the final position,
/// or `None` as soon as it turns non-finite.
pub fn leapfrog<F>(q: &mut [f64], p: &mut [f64], target: &mut F, step_size: f64, steps: usize) -> Option<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let mut grad = vec![0.0; q.len()];
    let mut logp = target(q, &mut grad);
    if !logp.is_finite() {
        return None;
    }
    for _ in 0..steps {
        p.iter_mut().zip(&grad).for_each(|(p, g)| *p += 0.5 * step_size * g);
        q.iter_mut().zip(p.iter()).for_each(|(q, p)| *q += step_size * p);
        logp = target(q, &mut grad);
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        p.iter_mut().zip(&grad).for_each(|(p, g)| *p += 0.5 * step_size * g);
    }
    Some(logp)
}

/// One HMC transition with unit-mass Gaussian momentum.
pub fn hmc_update<F, R>(position: &[f64], mut target: F, cfg: &HmcConfig, rng: &mut R) -> Result<HmcOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    R: Rng + ?Sized,
{
    let mut scratch = vec![0.0; position.len()];
    let logp0 = target(position, &mut scratch);
    if !logp0.is_finite() || scratch.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("log density or gradient at HMC start".into()));
    }
    let mut p: Vec<f64> = (0..position.len()).map(|_| rng.sample(StandardNormal)).collect();
    let kinetic0: f64 = 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let mut q = position.to_vec();
    let logp1 = leapfrog(&mut q, &mut p, &mut target, cfg.step_size, cfg.leapfrog_steps);
    let u: f64 = rng.random();
    let Some(logp1) = logp1 else {
        return Ok(HmcOutcome {
            position: position.to_vec(),
            accepted: false,
            energy_change: f64::NAN,
        });
    };
    let kinetic1: f64 = 0.5 * p.iter().map(|v| v * v).sum::<f64>();
    let energy_change = (kinetic1 - logp1) - (kinetic0 - logp0);
    let accepted = energy_change.is_finite() && u.ln() < -energy_change;
    Ok(HmcOutcome {
        position: if accepted { q } else { position.to_vec() },
        accepted,
        energy_change,
    })
}
