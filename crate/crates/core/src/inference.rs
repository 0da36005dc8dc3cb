//! Fitting by MCMC and posterior-predictive classification.
//!
//! An iteration is one update of all location parameters (a full sweep of
//! univariate slice updates, or one joint HMC trajectory) followed by one
//! pass over every scale hyperparameter. MNL and corMNL update all their
//! coefficients together; treeMNL runs one independent chain per internal
//! node on the cases routed through that node.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Standardization};
use crate::error::{Error, Result};
use crate::hierarchy::ClassHierarchy;
use crate::models::linear::{normal_log_prior_grad, Design, Hypers, LogitCache};
use crate::models::{initial_state, route_to_node, GammaPrior, ModelKind, ModelState, Priors};
use crate::samplers::{
    gibbs_precision_update, hmc_update, slice_precision_update, slice_update, HmcConfig, RngStream, SliceConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefKernel {
    Slice,
    Hmc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HyperKernel {
    Gibbs,
    Slice,
}

impl std::str::FromStr for CoefKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slice" => Ok(CoefKernel::Slice),
            "hmc" => Ok(CoefKernel::Hmc),
            _ => Err(Error::InvalidConfig(format!("unknown coefficient kernel {s:?}; expected slice or hmc"))),
        }
    }
}

impl std::str::FromStr for HyperKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gibbs" => Ok(HyperKernel::Gibbs),
            "slice" => Ok(HyperKernel::Slice),
            _ => Err(Error::InvalidConfig(format!("unknown hyperparameter kernel {s:?}; expected gibbs or slice"))),
        }
    }
}

/// Per-coordinate HMC step sizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepScaling {
    /// Every coordinate moves with `step_size`.
    #[default]
    Unit,
    /// Coordinate `k` moves with `step_size / sqrt(1/sd_k² + Σ_i z_ik² / 4)`,
    /// where `sd_k` is its current prior sd and `z_ik` its covariate values;
    /// recomputed before every trajectory from the current hyperparameters.
    Curvature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Keep every `thin`-th post-burn-in iteration.
    #[serde(default = "one")]
    pub thin: usize,
    pub coef_kernel: CoefKernel,
    pub hyper_kernel: HyperKernel,
    pub hmc: HmcConfig,
    #[serde(default)]
    pub hmc_scaling: StepScaling,
    pub slice: SliceConfig,
    pub seed: u64,
    #[serde(default)]
    pub require_standardized: bool,
    /// Leading iterations that update coefficients only, holding the scale
    /// hyperparameters at their initial values.
    #[serde(default)]
    pub hyper_delay: usize,
}

fn one() -> usize {
    1
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 1000,
            burn_in: 250,
            thin: 1,
            coef_kernel: CoefKernel::Slice,
            hyper_kernel: HyperKernel::Gibbs,
            hmc: HmcConfig::default(),
            hmc_scaling: StepScaling::Unit,
            slice: SliceConfig::default(),
            seed: 1,
            require_standardized: false,
            hyper_delay: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.hyper_delay > self.burn_in {
            return Err(Error::InvalidConfig(format!(
                "hyper_delay ({}) must not exceed burn-in ({})",
                self.hyper_delay, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidConfig("thin must be at least 1".into()));
        }
        self.hmc.validate()?;
        self.slice.validate()
    }

    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }
}

/// Per-draw diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iteration: usize,
    /// Log-likelihood of the training cases.
    pub log_lik: f64,
    /// Values in the order of [`PosteriorChain::hyper_names`].
    pub hypers: Vec<f64>,
    /// Fraction of HMC proposals accepted in this iteration.
    pub acceptance: Option<f64>,
}

/// Retained posterior draws with their diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChain {
    pub model: ModelKind,
    pub hierarchy: ClassHierarchy,
    pub priors: Priors,
    pub config: FitConfig,
    /// Transform applied to the training covariates; prediction inputs must
    /// receive the same one.
    pub standardization: Option<Standardization>,
    pub hyper_names: Vec<String>,
    pub draws: Vec<ModelState>,
    pub diagnostics: Vec<Diagnostics>,
}

struct DesignPriors {
    tau0: GammaPrior,
    groups: Vec<GammaPrior>,
    ard: Option<GammaPrior>,
}

struct Sample {
    coef: Vec<f64>,
    hypers: Hypers,
    log_lik: f64,
    accepted: Option<bool>,
}

fn update_hyper(
    kernel: HyperKernel,
    current: f64,
    values: &[f64],
    prior: &GammaPrior,
    slice: &SliceConfig,
    rng: &mut RngStream,
) -> Result<f64> {
    match kernel {
        HyperKernel::Gibbs => Ok(gibbs_precision_update(values, prior, rng)),
        HyperKernel::Slice => slice_precision_update(current, values, prior, slice, rng),
    }
}

fn update_hypers(
    design: &Design,
    coef: &[f64],
    hypers: &mut Hypers,
    priors: &DesignPriors,
    cfg: &FitConfig,
    rng: &mut RngStream,
) -> Result<()> {
    let (c, p) = (design.c, design.p);
    let phi = |u: usize, l: usize| coef[c + u * p + l];
    let sigma = |h: &Hypers, l: usize| h.sigma.as_ref().map_or(1.0, |s| s[l]);

    hypers.tau0 = update_hyper(cfg.hyper_kernel, hypers.tau0, &coef[..c], &priors.tau0, &cfg.slice, rng)?;
    for g in 0..design.n_groups {
        let values: Vec<f64> = (0..design.n_units())
            .filter(|&u| design.group[u] == g)
            .flat_map(|u| (0..p).map(move |l| (u, l)))
            .map(|(u, l)| phi(u, l) / sigma(hypers, l))
            .collect();
        hypers.tau[g] = update_hyper(cfg.hyper_kernel, hypers.tau[g], &values, &priors.groups[g], &cfg.slice, rng)?;
    }
    if let Some(ard) = &priors.ard {
        for l in 0..p {
            let values: Vec<f64> = (0..design.n_units())
                .map(|u| phi(u, l) / hypers.tau[design.group[u]])
                .collect();
            let current = sigma(hypers, l);
            let next = update_hyper(cfg.hyper_kernel, current, &values, ard, &cfg.slice, rng)?;
            hypers.sigma.as_mut().expect("ARD scales present")[l] = next;
        }
    }
    Ok(())
}

fn slice_sweep(
    design: &Design,
    x: ArrayView2<f64>,
    y: &[usize],
    coef: &mut [f64],
    sd: &[f64],
    slice: &SliceConfig,
    rng: &mut RngStream,
) -> Result<()> {
    let mut cache = LogitCache::new(design, coef, x, y);
    for k in 0..coef.len() {
        let start = coef[k];
        let cond = cache.conditional(k, start);
        let prec = 1.0 / (sd[k] * sd[k]);
        let draw = slice_update(start, |v| cond.log_lik_delta(v) - 0.5 * v * v * prec, slice, rng)?;
        cache.apply(&cond, draw.value - start);
        coef[k] = draw.value;
    }
    Ok(())
}

fn run_design(
    design: &Design,
    x: ArrayView2<f64>,
    y: &[usize],
    priors: &DesignPriors,
    mut coef: Vec<f64>,
    mut hypers: Hypers,
    cfg: &FitConfig,
    mut rng: RngStream,
) -> Result<Vec<Sample>> {
    debug_assert_eq!(coef.len(), design.n_coef());
    let initial = design.log_lik(&coef, x, y) + normal_log_prior_grad(&coef, &design.prior_sd(&hypers), None);
    if !initial.is_finite() {
        return Err(Error::NonFinite("log posterior at initialization".into()));
    }
    let n_cases = y.len() as f64;
    let col_sq: Vec<f64> = x.columns().into_iter().map(|c| c.dot(&c)).collect();
    let mut out = Vec::with_capacity(cfg.retained());
    for it in 0..cfg.iterations {
        let sd = design.prior_sd(&hypers);
        let accepted = match cfg.coef_kernel {
            CoefKernel::Slice => {
                slice_sweep(design, x, y, &mut coef, &sd, &cfg.slice, &mut rng)?;
                None
            }
            CoefKernel::Hmc => {
                // run on u = q / scale so one step size suits every coordinate
                let scale: Vec<f64> = match cfg.hmc_scaling {
                    StepScaling::Unit => vec![1.0; coef.len()],
                    StepScaling::Curvature => sd
                        .iter()
                        .enumerate()
                        .map(|(k, s)| {
                            let z2 = if k < design.c { n_cases } else { col_sq[(k - design.c) % design.p] };
                            (1.0 / (s * s) + 0.25 * z2).sqrt().recip()
                        })
                        .collect(),
                };
                let mut q = vec![0.0; coef.len()];
                let target = |u: &[f64], g: &mut [f64]| {
                    q.iter_mut().zip(u).zip(&scale).for_each(|((q, u), s)| *q = u * s);
                    g.fill(0.0);
                    let lp = design.log_lik_grad(&q, x, y, g) + normal_log_prior_grad(&q, &sd, Some(g));
                    g.iter_mut().zip(&scale).for_each(|(g, s)| *g *= s);
                    lp
                };
                let u0: Vec<f64> = coef.iter().zip(&scale).map(|(c, s)| c / s).collect();
                let step = hmc_update(&u0, target, &cfg.hmc, &mut rng)?;
                if step.accepted {
                    coef = step.position.iter().zip(&scale).map(|(u, s)| u * s).collect();
                }
                Some(step.accepted)
            }
        };
        if it >= cfg.hyper_delay {
            update_hypers(design, &coef, &mut hypers, priors, cfg, &mut rng)?;
        }
        if it >= cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thin) {
            out.push(Sample {
                coef: coef.clone(),
                hypers: hypers.clone(),
                log_lik: design.log_lik(&coef, x, y),
                accepted,
            });
        }
    }
    Ok(out)
}

/// Fits `kind` with the random stream derived from `cfg.seed`.
pub fn fit(kind: ModelKind, h: &ClassHierarchy, data: &Dataset, priors: &Priors, cfg: &FitConfig) -> Result<PosteriorChain> {
    fit_with_stream(kind, h, data, priors, cfg, RngStream::new(cfg.seed, 0))
}

/// Like [`fit`] with an explicit stream. treeMNL node `m` uses `rng.child(m)`.
pub fn fit_with_stream(
    kind: ModelKind,
    h: &ClassHierarchy,
    data: &Dataset,
    priors: &Priors,
    cfg: &FitConfig,
    rng: RngStream,
) -> Result<PosteriorChain> {
    cfg.validate()?;
    priors.validate()?;
    data.check_classes(h)?;
    if cfg.require_standardized && !data.is_standardized() {
        return Err(Error::InvalidConfig("configuration requires standardized covariates".into()));
    }
    let p = data.p();
    let init = initial_state(kind, h, p, priors);
    let hyper_names = init.hyperparameters().into_iter().map(|(n, _)| n).collect();
    let node_priors = |depth: usize| DesignPriors {
        tau0: priors.intercept,
        groups: vec![priors.node(depth)],
        ard: priors.ard,
    };

    let (draws, diagnostics): (Vec<ModelState>, Vec<Diagnostics>) = match init {
        ModelState::Mnl(s) => {
            let design = s.design();
            let dp = DesignPriors {
                tau0: priors.intercept,
                groups: vec![priors.flat],
                ard: priors.ard,
            };
            let samples = run_design(&design, data.x.view(), &data.y, &dp, s.coefficients(), s.hypers(), cfg, rng)?;
            samples
                .into_iter()
                .enumerate()
                .map(|(i, smp)| {
                    let mut st = s.clone();
                    st.set_coefficients(&smp.coef);
                    st.set_hypers(smp.hypers);
                    let state = ModelState::Mnl(st);
                    let diag = diagnostics_for(cfg, i, &state, smp.log_lik, smp.accepted.map(f64::from));
                    (state, diag)
                })
                .unzip()
        }
        ModelState::CorMnl(s) => {
            let design = s.design(h);
            let dp = DesignPriors {
                tau0: priors.intercept,
                groups: (0..h.n_nodes()).map(|m| priors.node(h.node(m).depth)).collect(),
                ard: priors.ard,
            };
            let samples = run_design(&design, data.x.view(), &data.y, &dp, s.coefficients(), s.hypers(), cfg, rng)?;
            samples
                .into_iter()
                .enumerate()
                .map(|(i, smp)| {
                    let mut st = s.clone();
                    st.set_coefficients(&smp.coef);
                    st.set_hypers(smp.hypers);
                    let state = ModelState::CorMnl(st);
                    let diag = diagnostics_for(cfg, i, &state, smp.log_lik, smp.accepted.map(f64::from));
                    (state, diag)
                })
                .unzip()
        }
        ModelState::TreeMnl(s) => {
            let per_node: Vec<Vec<Sample>> = s
                .nodes
                .par_iter()
                .enumerate()
                .map(|(m, node)| {
                    let (x, y) = route_to_node(h, m, data);
                    let design = node.design();
                    let dp = node_priors(h.node(m).depth);
                    run_design(&design, x.view(), &y, &dp, node.coefficients(), node.hypers(), cfg, rng.child(m as u64))
                })
                .collect::<Result<_>>()?;
            let mut per_node: Vec<_> = per_node.into_iter().map(|v| v.into_iter()).collect();
            (0..cfg.retained())
                .map(|i| {
                    let mut st = s.clone();
                    let mut ll = 0.0;
                    let mut acc = Vec::new();
                    for (node, samples) in st.nodes.iter_mut().zip(per_node.iter_mut()) {
                        let smp = samples.next().expect("aligned node chains");
                        node.set_coefficients(&smp.coef);
                        node.set_hypers(smp.hypers);
                        ll += smp.log_lik;
                        acc.extend(smp.accepted);
                    }
                    let rate = (!acc.is_empty()).then(|| acc.iter().filter(|&&a| a).count() as f64 / acc.len() as f64);
                    let state = ModelState::TreeMnl(st);
                    let diag = diagnostics_for(cfg, i, &state, ll, rate);
                    (state, diag)
                })
                .unzip()
        }
    };

    Ok(PosteriorChain {
        model: kind,
        hierarchy: h.clone(),
        priors: priors.clone(),
        config: cfg.clone(),
        standardization: data.standardization.clone(),
        hyper_names,
        draws,
        diagnostics,
    })
}

fn diagnostics_for(cfg: &FitConfig, i: usize, state: &ModelState, log_lik: f64, acceptance: Option<f64>) -> Diagnostics {
    Diagnostics {
        iteration: cfg.burn_in + i * cfg.thin,
        log_lik,
        hypers: state.hyperparameters().into_iter().map(|(_, v)| v).collect(),
        acceptance,
    }
}

/// Posterior-predictive class probabilities for every row of `x`: the mean
/// over draws of each draw's probability vector.
pub fn predict_batch(chain: &PosteriorChain, h: &ClassHierarchy, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if chain.draws.is_empty() {
        return Err(Error::EmptyChain);
    }
    let mut acc = Array2::zeros((x.nrows(), h.n_classes()));
    for draw in &chain.draws {
        acc += &draw.class_probs_batch(h, x)?;
    }
    acc /= chain.draws.len() as f64;
    Ok(acc)
}

pub fn predict(chain: &PosteriorChain, h: &ClassHierarchy, x: &[f64]) -> Result<Vec<f64>> {
    let xv = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    Ok(predict_batch(chain, h, xv)?.into_raw_vec_and_offset().0)
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = j;
        }
    }
    best
}

/// Most probable class under the posterior predictive.
pub fn classify(chain: &PosteriorChain, h: &ClassHierarchy, x: &[f64]) -> Result<usize> {
    Ok(argmax(&predict(chain, h, x)?))
}

impl PosteriorChain {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let r = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }

    /// Diagnostics as CSV: `iteration,log_lik,acceptance,<hyperparameters>`.
    pub fn write_trace<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "iteration,log_lik,acceptance")?;
        for name in &self.hyper_names {
            write!(out, ",{name}")?;
        }
        writeln!(out)?;
        for d in &self.diagnostics {
            write!(out, "{},{:?},", d.iteration, d.log_lik)?;
            if let Some(a) = d.acceptance {
                write!(out, "{a:?}")?;
            }
            for v in &d.hypers {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
