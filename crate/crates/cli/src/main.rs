//! `hiermnl`: simulate, fit, predict, evaluate and replicate comparison tables.

mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hiermnl::datagen::{generate_replication, load_csv, standardize, write_csv, CsvSchema, Dataset};
use hiermnl::eval::{build_comparison, evaluate, ComparisonTable};
use hiermnl::inference::{argmax, fit, predict_batch, CoefKernel, PosteriorChain};
use hiermnl::models::ModelKind;
use hiermnl::protocols::{run_split_protocol, Protocol, PROTOCOL_NAMES};
use hiermnl::samplers::RngStream;
use hiermnl::ClassHierarchy;

use config::{require, require_file, RunConfig};

#[derive(Parser)]
#[command(name = "hiermnl", version, about = "Bayesian MNL, treeMNL and corMNL classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/test replications from a model's prior.
    Simulate(Flags),
    /// Fit a model to a CSV training set and save the posterior chain.
    Fit(Flags),
    /// Write posterior-predictive class probabilities for a CSV test set.
    Predict(Flags),
    /// Report average log-probability and error rate on a CSV test set.
    Evaluate(Flags),
    /// Run a generator × fitter comparison under a named protocol.
    ReplicateTables(Flags),
}

#[derive(Args, Clone, Debug, Default)]
struct Flags {
    /// TOML file with [data], [fit] and [experiment] sections; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// mnl, treemnl or cormnl.
    #[arg(long)]
    model: Option<ModelKind>,
    /// File holding the class tree, e.g. `((1,2),(3,4))`.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Saved chain from `fit`.
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Name of the label column in CSV input.
    #[arg(long)]
    label: Option<String>,
    /// Standardize training covariates; test inputs get the same transform.
    #[arg(long)]
    standardize: bool,
    /// Protocol supplying priors and sampler defaults for `fit` and `simulate`.
    #[arg(long)]
    protocol: Option<String>,
    /// Protocol to replicate.
    #[arg(long)]
    table: Option<String>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Coefficient sampler: slice or hmc.
    #[arg(long)]
    kernel: Option<CoefKernel>,
    #[arg(long)]
    leapfrog: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Flags {
    fn to_config(&self) -> RunConfig {
        let mut c = RunConfig::default();
        c.data.hierarchy = self.hierarchy.clone();
        c.data.train = self.train.clone();
        c.data.test = self.test.clone();
        c.data.chain = self.chain.clone();
        c.data.label_column = self.label.clone();
        c.data.standardize = self.standardize.then_some(true);
        c.fit.model = self.model;
        c.fit.protocol = self.protocol.clone();
        c.fit.iterations = self.iters;
        c.fit.burn_in = self.burnin;
        c.fit.thin = self.thin;
        c.fit.kernel = self.kernel;
        c.fit.leapfrog_steps = self.leapfrog;
        c.fit.step_size = self.step_size;
        c.fit.seed = self.seed;
        c.experiment.table = self.table.clone();
        c.experiment.reps = self.reps;
        c.experiment.out = self.out.clone();
        c
    }

    fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        Ok(base.overlay(&self.to_config()))
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (name, flags) = match &cli.command {
        Command::Simulate(f) => ("simulate", f),
        Command::Fit(f) => ("fit", f),
        Command::Predict(f) => ("predict", f),
        Command::Evaluate(f) => ("evaluate", f),
        Command::ReplicateTables(f) => ("replicate-tables", f),
    };
    let cfg = flags.resolve()?;
    let out = require(&cfg.experiment.out, "--out", "experiment.out")?.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(
        out.join(format!("{name}.toml")),
        format!("# re-run with: hiermnl {name} --config {name}.toml\n{}", cfg.to_toml()?),
    )?;
    match cli.command {
        Command::Simulate(_) => simulate(&cfg, &out),
        Command::Fit(_) => fit_cmd(&cfg, &out),
        Command::Predict(_) => predict_cmd(&cfg, &out),
        Command::Evaluate(_) => evaluate_cmd(&cfg, &out),
        Command::ReplicateTables(_) => replicate(&cfg, &out),
    }
}

fn protocol(name: Option<&String>, default: &str) -> Result<Protocol> {
    let name = name.map_or(default, String::as_str);
    Protocol::by_name(name).with_context(|| format!("protocol {name:?}"))
}

fn load_hierarchy(cfg: &RunConfig, proto: &Protocol) -> Result<ClassHierarchy> {
    match &cfg.data.hierarchy {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("--hierarchy: reading {}", path.display()))?;
            ClassHierarchy::parse(text.trim()).with_context(|| format!("--hierarchy: parsing {}", path.display()))
        }
        None => Ok(proto.hierarchy.clone()),
    }
}

fn schema(cfg: &RunConfig) -> CsvSchema {
    CsvSchema::new(cfg.data.label_column.clone().unwrap_or_else(|| "label".into()))
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let proto = protocol(cfg.fit.protocol.as_ref().or(cfg.experiment.table.as_ref()), "sim-n100")?;
    let generator = *require(&cfg.fit.model, "--model", "fit.model")?;
    let reps = cfg.experiment.reps.unwrap_or(1);
    let spec = proto.sim_spec(generator, reps, cfg.fit.seed.unwrap_or(1));
    fs::write(out.join("hierarchy.tree"), format!("{}\n", spec.hierarchy))?;
    for r in 0..reps {
        let mut rng = RngStream::new(spec.seed, r as u64);
        let rep = generate_replication(&spec, &mut rng)?;
        let dir = out.join(format!("rep{r:03}"));
        fs::create_dir_all(&dir)?;
        write_csv(dir.join("train.csv"), &rep.train)?;
        write_csv(dir.join("test.csv"), &rep.test)?;
        fs::write(dir.join("truth.json"), serde_json::to_string_pretty(&rep.truth)?)?;
    }
    println!("wrote {reps} replication(s) to {}", out.display());
    Ok(())
}

fn fit_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let proto = protocol(cfg.fit.protocol.as_ref(), "sim-n100")?;
    let h = load_hierarchy(cfg, &proto)?;
    let kind = *require(&cfg.fit.model, "--model", "fit.model")?;
    let path = require_file(&cfg.data.train, "--train", "data.train")?;
    let mut train = load_csv(path, &schema(cfg), h.labels())?;
    if cfg.data.standardize == Some(true) {
        train = standardize(&train, &[])?.0;
    }
    let fit_cfg = cfg.fit_config(&proto.fit);
    let chain = fit(kind, &h, &train, &proto.priors, &fit_cfg)?;
    chain.save(out.join("chain.json"))?;
    let mut trace = Vec::new();
    chain.write_trace(&mut trace)?;
    fs::write(out.join("trace.csv"), trace)?;
    println!(
        "{}: {} draws retained from {} iterations; chain written to {}",
        kind,
        chain.draws.len(),
        fit_cfg.iterations,
        out.join("chain.json").display()
    );
    Ok(())
}

/// Loads the test CSV with the chain's class order and applies the
/// chain's training standardization, if any.
fn load_test(cfg: &RunConfig, chain: &PosteriorChain) -> Result<Dataset> {
    let path = require_file(&cfg.data.test, "--test", "data.test")?;
    let mut test = load_csv(path, &schema(cfg), chain.hierarchy.labels())?;
    if test.n() == 0 {
        bail!("--test: {} contains no cases", path.display());
    }
    if let Some(s) = &chain.standardization {
        for mut row in test.x.rows_mut() {
            let mut v = row.to_vec();
            s.apply_row(&mut v);
            row.iter_mut().zip(v).for_each(|(x, y)| *x = y);
        }
        test.standardization = Some(s.clone());
    }
    Ok(test)
}

fn load_chain(cfg: &RunConfig) -> Result<PosteriorChain> {
    let path = require_file(&cfg.data.chain, "--chain", "data.chain")?;
    PosteriorChain::load(path).with_context(|| format!("--chain: loading {}", path.display()))
}

fn predict_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let chain = load_chain(cfg)?;
    let test = load_test(cfg, &chain)?;
    let h = &chain.hierarchy;
    let probs = predict_batch(&chain, h, test.x.view())?;
    let mut w = csv::Writer::from_path(out.join("predictions.csv"))?;
    let mut header = vec!["label".to_string(), "predicted".to_string()];
    header.extend(h.labels().iter().map(|l| format!("p_{l}")));
    w.write_record(&header)?;
    for (row, &y) in probs.rows().into_iter().zip(&test.y) {
        let row = row.to_vec();
        let mut rec = vec![h.label(y).to_string(), h.label(argmax(&row)).to_string()];
        rec.extend(row.iter().map(|p| format!("{p:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("wrote {} predictions to {}", test.n(), out.join("predictions.csv").display());
    Ok(())
}

fn evaluate_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let chain = load_chain(cfg)?;
    let test = load_test(cfg, &chain)?;
    let result = evaluate(&chain, &chain.hierarchy, &test)?;
    fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&result)?)?;
    println!(
        "{}: average log-probability {:.4}, error {:.1}% on {} cases",
        chain.model,
        result.avg_log_prob,
        100.0 * result.error_rate,
        result.n_test
    );
    Ok(())
}

fn replicate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let name = require(&cfg.experiment.table, "--table", "experiment.table")?;
    if !PROTOCOL_NAMES.contains(&name.as_str()) {
        bail!("--table: unknown table {name:?}; expected one of {}", PROTOCOL_NAMES.join(", "));
    }
    let proto = Protocol::by_name(name)?;
    let fit_cfg = cfg.fit_config(&proto.fit);
    let seed = cfg.fit.seed.unwrap_or(1);
    let table: ComparisonTable = match proto.splits {
        Some(default_k) => {
            let k = cfg.experiment.reps.unwrap_or(default_k);
            let spec = proto.sim_spec(cfg.fit.model.unwrap_or(ModelKind::CorMnl), k, seed);
            run_split_protocol(&spec, k, &ModelKind::ALL, &fit_cfg)?
        }
        None => {
            let reps = cfg.experiment.reps.unwrap_or(100);
            let generators: Vec<ModelKind> = cfg.fit.model.map_or(ModelKind::ALL.to_vec(), |m| vec![m]);
            let specs: Vec<_> = generators.iter().map(|&g| proto.sim_spec(g, reps, seed)).collect();
            build_comparison(&specs, &ModelKind::ALL, &fit_cfg)?
        }
    };
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    fs::write(out.join("table.csv"), csv)?;
    let text = table.to_text();
    fs::write(out.join("table.txt"), &text)?;
    fs::write(out.join("table.json"), serde_json::to_string_pretty(&table)?)?;
    print!("{text}");
    Ok(())
}
