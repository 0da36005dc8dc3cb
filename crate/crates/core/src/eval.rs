//! Test-set metrics, paired t-tests and generator × fitter comparison grids.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::datagen::{generate_replication, Dataset, SimSpec};
use crate::error::{Error, Result};
use crate::hierarchy::ClassHierarchy;
use crate::inference::{argmax, fit_with_stream, predict_batch, FitConfig, PosteriorChain};
use crate::models::ModelKind;
use crate::samplers::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Mean natural-log predictive probability of the true class.
    pub avg_log_prob: f64,
    /// Fraction of test cases misclassified.
    pub error_rate: f64,
    pub n_test: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AvgLogProb,
    ErrorRate,
}

impl Metric {
    pub fn of(self, r: &EvalResult) -> f64 {
        match self {
            Metric::AvgLogProb => r.avg_log_prob,
            Metric::ErrorRate => r.error_rate,
        }
    }

    fn better(self, a: f64, b: f64) -> bool {
        match self {
            Metric::AvgLogProb => a > b,
            Metric::ErrorRate => a < b,
        }
    }
}

/// Scores an `n × c` matrix of predictive probabilities against labels `y`.
pub fn evaluate_probs(probs: ArrayView2<f64>, y: &[usize]) -> Result<EvalResult> {
    if y.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if probs.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} probability rows for {} labels",
            probs.nrows(),
            y.len()
        )));
    }
    let mut log_prob = 0.0;
    let mut wrong = 0usize;
    for (row, &yi) in probs.rows().into_iter().zip(y) {
        log_prob += row[yi].ln();
        let row = row.to_vec();
        if argmax(&row) != yi {
            wrong += 1;
        }
    }
    let n = y.len() as f64;
    Ok(EvalResult {
        avg_log_prob: log_prob / n,
        error_rate: wrong as f64 / n,
        n_test: y.len(),
    })
}

/// Average log-probability and error rate of the chain's posterior
/// predictive on `test`.
pub fn evaluate(chain: &PosteriorChain, h: &ClassHierarchy, test: &Dataset) -> Result<EvalResult> {
    if test.n() == 0 {
        return Err(Error::EmptyTestSet);
    }
    test.check_classes(h)?;
    let probs = predict_batch(chain, h, test.x.view())?;
    evaluate_probs(probs.view(), &test.y)
}

/// Paired t-test on `a - b`. Returns the t statistic and the two-sided
/// p-value from Student's t with `n - 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("paired samples of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidConfig("paired t-test needs at least two pairs".into()));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) || var < 1e-28 * mean.abs().max(1.0).powi(2) {
        return Err(Error::DegenerateVariance);
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid degrees of freedom");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok((t, p))
}

/// Per-replication results on a generator × fitter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub generators: Vec<ModelKind>,
    pub fitters: Vec<ModelKind>,
    /// `results[g][f][r]`.
    pub results: Vec<Vec<Vec<EvalResult>>>,
    /// The true generating parameters scored on the same test sets, `[g][r]`.
    pub truth: Option<Vec<Vec<EvalResult>>>,
}

/// One column comparison of the best fitter against another.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTestRow {
    pub generator: usize,
    pub best: usize,
    pub other: usize,
    pub t: f64,
    pub p: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

impl ComparisonTable {
    pub fn new(
        generators: Vec<ModelKind>,
        fitters: Vec<ModelKind>,
        results: Vec<Vec<Vec<EvalResult>>>,
        truth: Option<Vec<Vec<EvalResult>>>,
    ) -> Result<Self> {
        if results.len() != generators.len() || results.iter().any(|col| col.len() != fitters.len()) {
            return Err(Error::IncompleteGrid(format!(
                "expected {} generators × {} fitters",
                generators.len(),
                fitters.len()
            )));
        }
        let reps = results.first().and_then(|c| c.first()).map_or(0, Vec::len);
        if reps == 0 || results.iter().flatten().any(|cell| cell.len() != reps) {
            return Err(Error::IncompleteGrid("replication counts differ or are zero".into()));
        }
        if let Some(t) = &truth {
            if t.len() != generators.len() || t.iter().any(|v| v.len() != reps) {
                return Err(Error::IncompleteGrid("truth scores do not match the grid".into()));
            }
        }
        Ok(ComparisonTable {
            generators,
            fitters,
            results,
            truth,
        })
    }

    pub fn n_reps(&self) -> usize {
        self.results[0][0].len()
    }

    pub fn mean(&self, g: usize, f: usize) -> EvalResult {
        let cell = &self.results[g][f];
        EvalResult {
            avg_log_prob: mean(cell.iter().map(|r| r.avg_log_prob)),
            error_rate: mean(cell.iter().map(|r| r.error_rate)),
            n_test: cell[0].n_test,
        }
    }

    pub fn truth_mean(&self, g: usize) -> Option<EvalResult> {
        self.truth.as_ref().map(|t| EvalResult {
            avg_log_prob: mean(t[g].iter().map(|r| r.avg_log_prob)),
            error_rate: mean(t[g].iter().map(|r| r.error_rate)),
            n_test: t[g][0].n_test,
        })
    }

    pub fn values(&self, g: usize, f: usize, metric: Metric) -> Vec<f64> {
        self.results[g][f].iter().map(|r| metric.of(r)).collect()
    }

    /// Fitter with the best mean in generator column `g`; ties go to the
    /// earlier fitter.
    pub fn best(&self, g: usize, metric: Metric) -> usize {
        let mut best = 0;
        for f in 1..self.fitters.len() {
            if metric.better(metric.of(&self.mean(g, f)), metric.of(&self.mean(g, best))) {
                best = f;
            }
        }
        best
    }

    /// Whether each generator column is won by the fitter of the same kind.
    pub fn diagonal_best(&self, metric: Metric) -> Vec<bool> {
        self.generators
            .iter()
            .enumerate()
            .map(|(g, kind)| self.fitters[self.best(g, metric)] == *kind)
            .collect()
    }

    pub fn paired_test(&self, g: usize, f1: usize, f2: usize, metric: Metric) -> Result<(f64, f64)> {
        paired_t_test(&self.values(g, f1, metric), &self.values(g, f2, metric))
    }

    /// Paired tests of each column's best fitter against every other fitter.
    pub fn best_vs_rest(&self, metric: Metric) -> Vec<Result<TTestRow>> {
        let mut out = Vec::new();
        for g in 0..self.generators.len() {
            let best = self.best(g, metric);
            for other in (0..self.fitters.len()).filter(|&f| f != best) {
                out.push(self.paired_test(g, best, other, metric).map(|(t, p)| TTestRow {
                    generator: g,
                    best,
                    other,
                    t,
                    p,
                }));
            }
        }
        out
    }

    /// One row per cell: `generator,fitter,reps,avg_log_prob,error_rate,best_log_prob,best_error`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "generator,fitter,reps,avg_log_prob,error_rate,best_log_prob,best_error")?;
        for (g, gen) in self.generators.iter().enumerate() {
            let (bl, be) = (self.best(g, Metric::AvgLogProb), self.best(g, Metric::ErrorRate));
            for (f, fit) in self.fitters.iter().enumerate() {
                let m = self.mean(g, f);
                writeln!(
                    out,
                    "{},{},{},{:?},{:?},{},{}",
                    gen.name(),
                    fit.name(),
                    self.n_reps(),
                    m.avg_log_prob,
                    m.error_rate,
                    f == bl,
                    f == be
                )?;
            }
            if let Some(t) = self.truth_mean(g) {
                writeln!(out, "{},truth,{},{:?},{:?},false,false", gen.name(), self.n_reps(), t.avg_log_prob, t.error_rate)?;
            }
        }
        Ok(())
    }

    /// Aligned text: one row per fitted model, one column per generator,
    /// each cell holding the mean average log-probability and error percent.
    /// `*` marks the column's best value.
    pub fn to_text(&self) -> String {
        let width = 20;
        let mut s = String::new();
        let _ = write!(s, "{:<10}", "Fitted");
        for g in &self.generators {
            let _ = write!(s, "{:>width$}", format!("{} data", g.name()));
        }
        s.push('\n');
        let _ = write!(s, "{:<10}", "");
        for _ in &self.generators {
            let _ = write!(s, "{:>width$}", "LogProb   Error%");
        }
        s.push('\n');
        for (f, fit) in self.fitters.iter().enumerate() {
            let _ = write!(s, "{:<10}", fit.name());
            for g in 0..self.generators.len() {
                let m = self.mean(g, f);
                let lp = format!("{:.4}{}", m.avg_log_prob, if self.best(g, Metric::AvgLogProb) == f { "*" } else { " " });
                let er = format!("{:.1}{}", 100.0 * m.error_rate, if self.best(g, Metric::ErrorRate) == f { "*" } else { " " });
                let _ = write!(s, "{:>width$}", format!("{lp} {er:>7}"));
            }
            s.push('\n');
        }
        if self.truth.is_some() {
            let _ = write!(s, "{:<10}", "truth");
            for g in 0..self.generators.len() {
                let t = self.truth_mean(g).expect("truth present");
                let _ = write!(s, "{:>width$}", format!("{:.4}  {:>7}", t.avg_log_prob, format!("{:.1} ", 100.0 * t.error_rate)));
            }
            s.push('\n');
        }
        let _ = writeln!(s, "({} replications; * marks the best value in each column)", self.n_reps());
        for row in self.best_vs_rest(Metric::AvgLogProb) {
            match row {
                Ok(r) => {
                    let _ = writeln!(
                        s,
                        "{} data: {} vs {} on LogProb: t = {:.3}, p = {:.4}",
                        self.generators[r.generator].name(),
                        self.fitters[r.best].name(),
                        self.fitters[r.other].name(),
                        r.t,
                        r.p
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "t-test unavailable: {e}");
                }
            }
        }
        s
    }
}

/// Generates `spec.replications` datasets per generator spec, fits every
/// fitter to each, and scores them on the held-out cases.
///
/// Replication `r` of spec `g` draws its data from stream `r` of
/// `spec.seed`; fitter `f` then uses child stream `f` of that stream, so
/// the grid does not depend on thread scheduling.
pub fn build_comparison(specs: &[SimSpec], fitters: &[ModelKind], cfg: &FitConfig) -> Result<ComparisonTable> {
    if specs.is_empty() || fitters.is_empty() {
        return Err(Error::IncompleteGrid("no generators or no fitters".into()));
    }
    for spec in specs {
        spec.validate()?;
    }
    cfg.validate()?;
    let reps = specs[0].replications;
    if specs.iter().any(|s| s.replications != reps) {
        return Err(Error::IncompleteGrid("generator specs disagree on the replication count".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|g| (0..reps).map(move |r| (g, r))).collect();
    let scored: Vec<(Vec<EvalResult>, EvalResult)> = jobs
        .par_iter()
        .map(|&(g, r)| run_replication(&specs[g], r, fitters, cfg))
        .collect::<Result<_>>()?;

    let mut results = vec![vec![Vec::with_capacity(reps); fitters.len()]; specs.len()];
    let mut truth = vec![Vec::with_capacity(reps); specs.len()];
    for (&(g, _), (row, t)) in jobs.iter().zip(scored) {
        for (f, res) in row.into_iter().enumerate() {
            results[g][f].push(res);
        }
        truth[g].push(t);
    }
    ComparisonTable::new(specs.iter().map(|s| s.generator).collect(), fitters.to_vec(), results, Some(truth))
}

/// Scores of every fitter plus the true parameters on replication `r`.
pub fn run_replication(spec: &SimSpec, r: usize, fitters: &[ModelKind], cfg: &FitConfig) -> Result<(Vec<EvalResult>, EvalResult)> {
    let stream = RngStream::new(spec.seed, r as u64);
    let mut data_rng = stream.clone();
    let rep = generate_replication(spec, &mut data_rng)?;
    let h = &spec.hierarchy;
    let truth_probs = rep.truth.class_probs_batch(h, rep.test.x.view())?;
    let truth = evaluate_probs(truth_probs.view(), &rep.test.y)?;
    let row = fitters
        .iter()
        .enumerate()
        .map(|(f, &kind)| {
            let chain = fit_with_stream(kind, h, &rep.train, &spec.priors, cfg, stream.child(f as u64))?;
            evaluate(&chain, h, &rep.test)
        })
        .collect::<Result<_>>()?;
    Ok((row, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_and_uniform_predictors() {
        let perfect = array![[1.0, 0.0], [0.0, 1.0]];
        let r = evaluate_probs(perfect.view(), &[0, 1]).unwrap();
        assert_eq!((r.avg_log_prob, r.error_rate), (0.0, 0.0));

        let uniform = ndarray::Array2::from_elem((4, 4), 0.25);
        let r = evaluate_probs(uniform.view(), &[0, 1, 2, 3]).unwrap();
        assert!((r.avg_log_prob - 0.25f64.ln()).abs() < 1e-15);
        assert_eq!(r.error_rate, 0.75);
    }

    #[test]
    fn empty_test_set_rejected() {
        let empty = ndarray::Array2::<f64>::zeros((0, 3));
        assert!(matches!(evaluate_probs(empty.view(), &[]), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn row_order_does_not_matter() {
        let probs = array![[0.7, 0.3], [0.2, 0.8], [0.6, 0.4]];
        let a = evaluate_probs(probs.view(), &[0, 0, 1]).unwrap();
        let rev = array![[0.6, 0.4], [0.2, 0.8], [0.7, 0.3]];
        let b = evaluate_probs(rev.view(), &[1, 0, 0]).unwrap();
        assert!((a.avg_log_prob - b.avg_log_prob).abs() < 1e-15);
        assert_eq!(a.error_rate, b.error_rate);
    }

    #[test]
    fn t_test_guards() {
        let a = [0.3, 0.1, 0.4];
        assert!(matches!(paired_t_test(&a, &a), Err(Error::DegenerateVariance)));
        let b = [0.2, 0.0, 0.3];
        assert!(matches!(paired_t_test(&a, &b), Err(Error::DegenerateVariance)));
        assert!(paired_t_test(&[1.0], &[0.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn t_test_antisymmetric() {
        let a = [0.5, 0.1, 0.9, 0.4];
        let b = [0.2, 0.3, 0.1, 0.0];
        let (t1, p1) = paired_t_test(&a, &b).unwrap();
        let (t2, p2) = paired_t_test(&b, &a).unwrap();
        assert_eq!(t1, -t2);
        assert!((p1 - p2).abs() < 1e-15);
    }

    fn table(cells: &[[f64; 3]; 2]) -> ComparisonTable {
        let kinds = ModelKind::ALL.to_vec();
        let results = cells
            .iter()
            .map(|col| {
                col.iter()
                    .map(|&v| {
                        vec![EvalResult {
                            avg_log_prob: v,
                            error_rate: -v / 4.0,
                            n_test: 10,
                        }]
                    })
                    .collect()
            })
            .collect();
        ComparisonTable::new(kinds[..2].to_vec(), kinds, results, None).unwrap()
    }

    #[test]
    fn single_replication_means_and_flags() {
        let t = table(&[[-0.5, -0.7, -0.6], [-0.9, -0.4, -0.8]]);
        assert_eq!(t.mean(0, 2).avg_log_prob, -0.6);
        assert_eq!(t.best(0, Metric::AvgLogProb), 0);
        assert_eq!(t.best(1, Metric::AvgLogProb), 1);
        assert_eq!(t.diagonal_best(Metric::AvgLogProb), vec![true, true]);
        assert_eq!(t.best(1, Metric::ErrorRate), 1);
        let text = t.to_text();
        assert!(text.contains("-0.5000*"), "{text}");
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 7);
    }

    #[test]
    fn incomplete_grid_rejected() {
        let kinds = ModelKind::ALL.to_vec();
        let r = EvalResult {
            avg_log_prob: -1.0,
            error_rate: 0.5,
            n_test: 1,
        };
        let ragged = vec![vec![vec![r], vec![r, r], vec![r]]];
        assert!(matches!(
            ComparisonTable::new(kinds[..1].to_vec(), kinds.clone(), ragged, None),
            Err(Error::IncompleteGrid(_))
        ));
        let missing = vec![vec![vec![r], vec![r]]];
        assert!(ComparisonTable::new(kinds[..1].to_vec(), kinds, missing, None).is_err());
    }
}
