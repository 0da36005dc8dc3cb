//! Named experiment protocols: hierarchies, prior tables and sampler
//! settings for the synthetic replications and the document-style surrogate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_labels, sample_prior_state, standardize, subsample_splits, Covariates, Dataset, SimSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate, evaluate_probs, ComparisonTable, EvalResult};
use crate::hierarchy::ClassHierarchy;
use crate::inference::{fit_with_stream, CoefKernel, FitConfig, HyperKernel, StepScaling};
use crate::models::{GammaPrior, ModelKind, Priors};
use crate::samplers::{HmcConfig, RngStream, SliceConfig};

/// Two groups of two classes.
pub const FOUR_CLASS_TREE: &str = "((1,2),(3,4))";

/// Eight classes over three levels.
pub const EIGHT_CLASS_TREE: &str = "(((1,2),(3,4,5)),6,(7,8))";

/// 24 page-region classes of scanned documents.
pub const DOCUMENT_TREE: &str = r#"(("Text","Ref.",("Foot Note",("Fig. Cap.","Table Cap."),"Bullet Item")),"Abstract",("Auth. List","Ed. List"),"Header",("Sec. Head.","Subsec. Head."),"Footer",("Fig. Label","Table Label"),"Eq.","Eq. #","Page #","Main Title","Decoration",("Table",("Graph","Fig."),"Code"))"#;

pub const PROTOCOL_NAMES: [&str; 4] = ["sim-n100", "sim-n50", "sim-complex", "doc-surrogate"];

fn gamma(a: f64, b: f64) -> GammaPrior {
    GammaPrior::new(a, b).expect("valid built-in prior")
}

/// A complete experiment setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub name: String,
    pub hierarchy: ClassHierarchy,
    pub priors: Priors,
    pub covariates: Covariates,
    pub n_total: usize,
    /// Training cases per replication (or per split).
    pub n_train: usize,
    /// Number of disjoint training sets drawn from one pool; `None` means
    /// a fresh dataset per replication with the first `n_train` cases for
    /// training.
    pub splits: Option<usize>,
    pub fit: FitConfig,
}

fn synthetic_fit() -> FitConfig {
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

impl Protocol {
    pub fn by_name(name: &str) -> Result<Self> {
        let sim_priors = |by_depth| Priors {
            intercept: gamma(1.0, 10.0),
            flat: gamma(1.0, 1.0),
            by_depth,
            ard: None,
        };
        let sim = |n_train: usize| Protocol {
            name: name.to_string(),
            hierarchy: ClassHierarchy::parse(FOUR_CLASS_TREE).expect("built-in tree"),
            priors: sim_priors(vec![gamma(1.0, 5.0), gamma(1.0, 20.0)]),
            covariates: Covariates::uniform(2, -5.0, 5.0),
            n_total: 10_000,
            n_train,
            splits: None,
            fit: synthetic_fit(),
        };
        Ok(match name {
            "sim-n100" => sim(100),
            "sim-n50" => sim(50),
            "sim-complex" => Protocol {
                hierarchy: ClassHierarchy::parse(EIGHT_CLASS_TREE).expect("built-in tree"),
                priors: sim_priors(vec![gamma(1.0, 5.0), gamma(1.0, 20.0), gamma(1.0, 100.0)]),
                covariates: Covariates::uniform(4, 0.0, 1.0),
                ..sim(100)
            },
            "doc-surrogate" => Protocol {
                name: name.to_string(),
                hierarchy: ClassHierarchy::parse(DOCUMENT_TREE).expect("built-in tree"),
                priors: Priors {
                    intercept: gamma(0.5, 1.0),
                    flat: gamma(0.5, 20.0),
                    by_depth: vec![gamma(0.5, 100.0)],
                    ard: Some(gamma(1.0, 10.0)),
                },
                covariates: Covariates::uniform(59, -3f64.sqrt(), 3f64.sqrt()),
                n_total: 5556,
                n_train: 200,
                splits: Some(10),
                fit: FitConfig {
                    iterations: 4000,
                    burn_in: 500,
                    thin: 1,
                    coef_kernel: CoefKernel::Hmc,
                    hyper_kernel: HyperKernel::Slice,
                    hmc: HmcConfig {
                        leapfrog_steps: 500,
                        step_size: 0.02,
                    },
                    hmc_scaling: StepScaling::Curvature,
                    slice: SliceConfig::default(),
                    seed: 1,
                    require_standardized: true,
                    hyper_delay: 50,
                },
            },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown protocol {other:?}; expected one of {}",
                    PROTOCOL_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn sim_spec(&self, generator: ModelKind, replications: usize, seed: u64) -> SimSpec {
        SimSpec {
            generator,
            hierarchy: self.hierarchy.clone(),
            covariates: self.covariates.clone(),
            n_total: self.n_total,
            n_train: self.n_train,
            priors: self.priors.clone(),
            replications,
            seed,
        }
    }
}

/// Draws one pool from `generator`'s prior, carves `k` disjoint training
/// sets of `size` cases plus the shared remainder, standardizes each split
/// with its own training statistics and scores every fitter on it.
///
/// The result has a single generator column with one "replication" per
/// split; `truth` scores the generating parameters on the raw test cases.
pub fn run_split_protocol(
    spec: &SimSpec,
    k: usize,
    fitters: &[ModelKind],
    cfg: &FitConfig,
) -> Result<ComparisonTable> {
    spec.validate()?;
    cfg.validate()?;
    let h = &spec.hierarchy;
    let mut rng = RngStream::new(spec.seed, 0);
    let truth = sample_prior_state(spec.generator, h, spec.covariates.p(), &spec.priors, &mut rng);
    let x = spec.covariates.sample(spec.n_total, &mut rng);
    let y = sample_labels(&truth, h, x.view(), &mut rng)?;
    let pool = Dataset::new(x, y, h.labels().to_vec())?;
    let splits = subsample_splits(&pool, k, spec.n_train, &mut rng)?;
    let truth_probs = truth.class_probs_batch(h, splits.test.x.view())?;
    let truth_score = evaluate_probs(truth_probs.view(), &splits.test.y)?;

    let per_split: Vec<Vec<EvalResult>> = splits
        .train
        .par_iter()
        .enumerate()
        .map(|(j, train)| {
            let (train, mut tests) = standardize(train, std::slice::from_ref(&splits.test))?;
            let test = tests.pop().expect("one test set");
            let stream = RngStream::new(spec.seed, 1 + j as u64);
            fitters
                .iter()
                .enumerate()
                .map(|(f, &kind)| {
                    let chain = fit_with_stream(kind, h, &train, &spec.priors, cfg, stream.child(f as u64))?;
                    evaluate(&chain, h, &test)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let results = vec![(0..fitters.len())
        .map(|f| per_split.iter().map(|row| row[f]).collect())
        .collect()];
    ComparisonTable::new(vec![spec.generator], fitters.to_vec(), results, Some(vec![vec![truth_score; k]]))
}
