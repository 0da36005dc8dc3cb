//! Run configuration: an optional TOML file with `[data]`, `[fit]` and
//! `[experiment]` sections, overridden field by field by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hiermnl::inference::{CoefKernel, FitConfig, HyperKernel, StepScaling};
use hiermnl::models::ModelKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub hierarchy: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub chain: Option<PathBuf>,
    pub label_column: Option<String>,
    pub standardize: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub model: Option<ModelKind>,
    /// Protocol whose prior table and sampler defaults apply.
    pub protocol: Option<String>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub kernel: Option<CoefKernel>,
    pub hyper_kernel: Option<HyperKernel>,
    pub leapfrog_steps: Option<usize>,
    pub step_size: Option<f64>,
    pub step_scaling: Option<StepScaling>,
    pub hyper_delay: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub table: Option<String>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),*) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: &RunConfig) -> Self {
        overlay!(self.data, flags.data, hierarchy, train, test, chain, label_column, standardize);
        overlay!(
            self.fit,
            flags.fit,
            model,
            protocol,
            iterations,
            burn_in,
            thin,
            kernel,
            hyper_kernel,
            leapfrog_steps,
            step_size,
            step_scaling,
            hyper_delay,
            seed
        );
        overlay!(self.experiment, flags.experiment, table, reps, out);
        self
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// The sampler settings: protocol defaults with every set field applied.
    pub fn fit_config(&self, base: &FitConfig) -> FitConfig {
        let f = &self.fit;
        let mut cfg = base.clone();
        if let Some(v) = f.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = f.burn_in {
            cfg.burn_in = v;
        }
        if let Some(v) = f.thin {
            cfg.thin = v;
        }
        if let Some(v) = f.kernel {
            cfg.coef_kernel = v;
        }
        if let Some(v) = f.hyper_kernel {
            cfg.hyper_kernel = v;
        }
        if let Some(v) = f.leapfrog_steps {
            cfg.hmc.leapfrog_steps = v;
        }
        if let Some(v) = f.step_size {
            cfg.hmc.step_size = v;
        }
        if let Some(v) = f.step_scaling {
            cfg.hmc_scaling = v;
        }
        if let Some(v) = f.hyper_delay {
            cfg.hyper_delay = v;
        }
        if let Some(v) = f.seed {
            cfg.seed = v;
        }
        cfg
    }
}

/// A required setting, with a message naming both the flag and the config key.
pub fn require<'a, T>(value: &'a Option<T>, flag: &str, key: &str) -> Result<&'a T> {
    match value {
        Some(v) => Ok(v),
        None => bail!("missing {flag} (or `{key}` in the config file)"),
    }
}

/// A required input file that must exist.
pub fn require_file<'a>(value: &'a Option<PathBuf>, flag: &str, key: &str) -> Result<&'a PathBuf> {
    let path = require(value, flag, key)?;
    if !path.is_file() {
        bail!("{flag}: file {} does not exist", path.display());
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file: RunConfig = toml::from_str(
            "[fit]\nmodel = \"mnl\"\niterations = 500\nseed = 3\n[experiment]\nreps = 4\n",
        )
        .unwrap();
        let mut flags = RunConfig::default();
        flags.fit.model = Some(ModelKind::CorMnl);
        flags.experiment.reps = Some(9);
        let merged = file.overlay(&flags);
        assert_eq!(merged.fit.model, Some(ModelKind::CorMnl));
        assert_eq!(merged.fit.iterations, Some(500));
        assert_eq!(merged.fit.seed, Some(3));
        assert_eq!(merged.experiment.reps, Some(9));
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.fit.kernel = Some(CoefKernel::Hmc);
        c.fit.step_size = Some(0.02);
        c.data.train = Some("a.csv".into());
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[fit]\niters = 3\n").is_err());
    }

    #[test]
    fn overrides_apply_to_protocol_defaults() {
        let mut c = RunConfig::default();
        c.fit.iterations = Some(40);
        c.fit.leapfrog_steps = Some(7);
        let cfg = c.fit_config(&FitConfig::default());
        assert_eq!(cfg.iterations, 40);
        assert_eq!(cfg.hmc.leapfrog_steps, 7);
        assert_eq!(cfg.burn_in, FitConfig::default().burn_in);
    }
}
