use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tuning for the stepping-out procedure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceConfig {
    /// Initial interval width.
    pub width: f64,
    /// Maximum number of width-`w` steps the interval may grow by.
    pub max_step_out: u32,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            width: 1.0,
            max_step_out: 32,
        }
    }
}

impl SliceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) || self.max_step_out < 1 {
            return Err(Error::InvalidConfig(format!(
                "slice sampler needs width > 0 and max_step_out >= 1, got {:?}",
                self
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceDraw {
    pub value: f64,
    /// Log height of the slice the draw was taken from.
    pub level: f64,
    pub evaluations: u32,
}

/// One univariate slice-sampling update with stepping out and shrinkage.
pub fn slice_update<F, R>(x0: f64, mut log_density: F, cfg: &SliceConfig, rng: &mut R) -> Result<SliceDraw>
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    let mut evaluations = 1;
    let f0 = log_density(x0);
    if !f0.is_finite() {
        return Err(Error::NonFinite(format!("log density at {x0}")));
    }
    // log U + f(x0), drawn via an exponential variate
    let level = f0 + rng.random::<f64>().ln();
    let w = cfg.width;

    let mut left = x0 - w * rng.random::<f64>();
    let mut right = left + w;
    let m = cfg.max_step_out;
    let mut j = (m as f64 * rng.random::<f64>()).floor() as u32;
    let mut k = (m - 1) - j;
    while j > 0 && log_density(left) > level {
        evaluations += 1;
        left -= w;
        j -= 1;
    }
    while k > 0 && log_density(right) > level {
        evaluations += 1;
        right += w;
        k -= 1;
    }

    loop {
        let x1 = left + rng.random::<f64>() * (right - left);
        evaluations += 1;
        let f1 = log_density(x1);
        if f1 >= level && f1.is_finite() {
            return Ok(SliceDraw {
                value: x1,
                level,
                evaluations,
            });
        }
        if x1 < x0 {
            left = x1;
        } else {
            right = x1;
        }
        if right - left < 1e-300 || left == right {
            return Err(Error::SliceCollapse(x0));
        }
    }
}
