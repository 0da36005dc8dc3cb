use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::hierarchy::{Child, ClassHierarchy};
use crate::models::{CorMnlState, MnlState, ModelKind, ModelState, Priors, TreeMnlState};

/// Covariate law: independent uniforms, one `(low, high)` pair per column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    pub bounds: Vec<(f64, f64)>,
}

impl Covariates {
    pub fn uniform(p: usize, low: f64, high: f64) -> Self {
        Covariates {
            bounds: vec![(low, high); p],
        }
    }

    pub fn p(&self) -> usize {
        self.bounds.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Array2<f64> {
        let p = self.p();
        let mut x = Array2::zeros((n, p));
        for i in 0..n {
            for (l, &(lo, hi)) in self.bounds.iter().enumerate() {
                x[[i, l]] = lo + (hi - lo) * rng.random::<f64>();
            }
        }
        x
    }
}

/// One synthetic experiment setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub generator: ModelKind,
    pub hierarchy: ClassHierarchy,
    pub covariates: Covariates,
    pub n_total: usize,
    pub n_train: usize,
    pub priors: Priors,
    pub replications: usize,
    pub seed: u64,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_train >= self.n_total {
            return Err(Error::InvalidConfig(format!(
                "n_train ({}) must be smaller than n_total ({})",
                self.n_train, self.n_total
            )));
        }
        if self.covariates.bounds.iter().any(|&(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidConfig("covariate bounds must satisfy low < high".into()));
        }
        self.priors.validate()
    }
}

#[derive(Clone, Debug)]
pub struct Replication {
    pub train: Dataset,
    pub test: Dataset,
    pub truth: ModelState,
}

fn draw_mnl<R: Rng + ?Sized>(c: usize, p: usize, tau0: f64, tau: f64, ard: &Option<Vec<f64>>, rng: &mut R) -> MnlState {
    let mut s = MnlState::zeros(c, p, tau0, tau, ard.clone());
    let n0 = Normal::new(0.0, tau0).expect("positive sd");
    s.alpha.iter_mut().for_each(|a| *a = n0.sample(rng));
    for l in 0..p {
        let sd = tau * ard.as_ref().map_or(1.0, |s| s[l]);
        let nl = Normal::new(0.0, sd).expect("positive sd");
        for j in 0..c {
            s.beta[[l, j]] = nl.sample(rng);
        }
    }
    s
}

/// Draws scales and coefficients from a model's prior.
pub fn sample_prior_state<R: Rng + ?Sized>(kind: ModelKind, h: &ClassHierarchy, p: usize, priors: &Priors, rng: &mut R) -> ModelState {
    let draw_ard = |rng: &mut R| priors.ard.map(|g| (0..p).map(|_| g.sample_tau(rng)).collect::<Vec<_>>());
    match kind {
        ModelKind::Mnl => {
            let tau0 = priors.intercept.sample_tau(rng);
            let tau = priors.flat.sample_tau(rng);
            let ard = draw_ard(rng);
            ModelState::Mnl(draw_mnl(h.n_classes(), p, tau0, tau, &ard, rng))
        }
        ModelKind::TreeMnl => {
            let nodes = (0..h.n_nodes())
                .map(|m| {
                    let tau0 = priors.intercept.sample_tau(rng);
                    let tau = priors.node(h.node(m).depth).sample_tau(rng);
                    let ard = draw_ard(rng);
                    draw_mnl(h.n_children(m), p, tau0, tau, &ard, rng)
                })
                .collect();
            ModelState::TreeMnl(TreeMnlState { nodes })
        }
        ModelKind::CorMnl => {
            let tau0 = priors.intercept.sample_tau(rng);
            let taus: Vec<f64> = (0..h.n_nodes()).map(|m| priors.node(h.node(m).depth).sample_tau(rng)).collect();
            let ard = draw_ard(rng);
            let mut s = CorMnlState::zeros(h, p, tau0, taus, ard);
            let n0 = Normal::new(0.0, tau0).expect("positive sd");
            s.alpha.iter_mut().for_each(|a| *a = n0.sample(rng));
            for b in 0..h.n_branches() {
                let tau = s.tau_node[h.branch(b).parent];
                for l in 0..p {
                    let sd = tau * s.ard.as_ref().map_or(1.0, |a| a[l]);
                    s.phi[[b, l]] = Normal::new(0.0, sd).expect("positive sd").sample(rng);
                }
            }
            ModelState::CorMnl(s)
        }
    }
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.len() - 1
}

/// Draws a class for each row of `x`: from the class probabilities for MNL
/// and corMNL, by successive node choices from the root for treeMNL.
pub fn sample_labels<R: Rng + ?Sized>(state: &ModelState, h: &ClassHierarchy, x: ArrayView2<f64>, rng: &mut R) -> Result<Vec<usize>> {
    match state {
        ModelState::TreeMnl(s) => {
            state.check(h)?;
            let mut y = Vec::with_capacity(x.nrows());
            for row in x.rows() {
                let xs = row.to_vec();
                let mut m = 0;
                loop {
                    let node = &s.nodes[m];
                    let probs = crate::models::softmax_probs(&node.alpha, node.beta.view(), &xs)?;
                    let slot = categorical(&probs, rng);
                    match h.branch(h.node(m).branches[slot]).child {
                        Child::Node(next) => m = next,
                        Child::Leaf(j) => {
                            y.push(j);
                            break;
                        }
                    }
                }
            }
            Ok(y)
        }
        _ => {
            let probs = state.class_probs_batch(h, x)?;
            Ok(probs.rows().into_iter().map(|r| categorical(r.as_slice().expect("row"), rng)).collect())
        }
    }
}

/// Draws parameters from the generator's prior, then `n_total` cases; the
/// first `n_train` form the training split.
pub fn generate_replication<R: Rng + ?Sized>(spec: &SimSpec, rng: &mut R) -> Result<Replication> {
    spec.validate()?;
    let h = &spec.hierarchy;
    let truth = sample_prior_state(spec.generator, h, spec.covariates.p(), &spec.priors, rng);
    let x = spec.covariates.sample(spec.n_total, rng);
    let y = sample_labels(&truth, h, x.view(), rng)?;
    let all = Dataset::new(x, y, h.labels().to_vec())?;
    let train_idx: Vec<usize> = (0..spec.n_train).collect();
    let test_idx: Vec<usize> = (spec.n_train..spec.n_total).collect();
    Ok(Replication {
        train: all.select(&train_idx),
        test: all.select(&test_idx),
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{initial_state, GammaPrior};
    use crate::samplers::RngStream;

    fn priors() -> Priors {
        let g = |a, b| GammaPrior::new(a, b).unwrap();
        Priors {
            intercept: g(1.0, 10.0),
            flat: g(1.0, 1.0),
            by_depth: vec![g(1.0, 5.0), g(1.0, 20.0)],
            ard: None,
        }
    }

    fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let n: usize = counts.iter().sum();
        let stat: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&o, &p)| (o as f64 - n as f64 * p).powi(2) / (n as f64 * p))
            .sum();
        1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
    }

    #[test]
    fn zero_coefficients_give_uniform_labels() {
        let h = ClassHierarchy::parse("((1,2),(3,4))").unwrap();
        let mut rng = RngStream::new(3, 0);
        for kind in ModelKind::ALL {
            let state = initial_state(kind, &h, 2, &priors());
            let x = Covariates::uniform(2, -5.0, 5.0).sample(8000, &mut rng);
            let y = sample_labels(&state, &h, x.view(), &mut rng).unwrap();
            let mut counts = vec![0; 4];
            y.iter().for_each(|&j| counts[j] += 1);
            assert!(chi_square_p(&counts, &[0.25; 4]) > 0.001, "{kind}: {counts:?}");
        }
    }

    #[test]
    fn labels_follow_generator_probabilities() {
        // fixed x so the analytic class probabilities are a single vector
        let h = ClassHierarchy::parse("((1,2),(3,(4,5)),6)").unwrap();
        let mut rng = RngStream::new(21, 0);
        for kind in ModelKind::ALL {
            let state = sample_prior_state(kind, &h, 2, &priors(), &mut rng);
            let x = Array2::from_shape_fn((10_000, 2), |(_, l)| if l == 0 { 0.4 } else { -0.7 });
            let probs = state.class_probs(&h, &[0.4, -0.7]).unwrap();
            let y = sample_labels(&state, &h, x.view(), &mut rng).unwrap();
            let mut counts = vec![0; 6];
            y.iter().for_each(|&j| counts[j] += 1);
            // pool classes with tiny expected counts into their neighbour
            let (mut c2, mut p2) = (Vec::new(), Vec::new());
            let (mut co, mut po) = (0, 0.0);
            for (c, p) in counts.iter().zip(&probs) {
                co += c;
                po += p;
                if po * 10_000.0 >= 20.0 {
                    c2.push(co);
                    p2.push(po);
                    co = 0;
                    po = 0.0;
                }
            }
            if let (Some(lc), Some(lp)) = (c2.last_mut(), p2.last_mut()) {
                *lc += co;
                *lp += po;
            }
            if c2.len() >= 2 {
                assert!(chi_square_p(&c2, &p2) > 0.001, "{kind}: {counts:?} vs {probs:?}");
            }
        }
    }

    #[test]
    fn replication_layout() {
        let spec = SimSpec {
            generator: ModelKind::CorMnl,
            hierarchy: ClassHierarchy::parse("((1,2),(3,4))").unwrap(),
            covariates: Covariates::uniform(2, -5.0, 5.0),
            n_total: 1000,
            n_train: 100,
            priors: priors(),
            replications: 1,
            seed: 0,
        };
        let mut rng = RngStream::new(1, 0);
        let r = generate_replication(&spec, &mut rng).unwrap();
        assert_eq!((r.train.n(), r.test.n(), r.train.p()), (100, 900, 2));
        assert!(r.train.x.iter().all(|v| (-5.0..5.0).contains(v)));
        assert_eq!(r.truth.kind(), ModelKind::CorMnl);

        let bad = SimSpec { n_train: 1000, ..spec };
        assert!(generate_replication(&bad, &mut rng).is_err());
    }
}
