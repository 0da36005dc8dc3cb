//! The three classifiers: flat MNL, nested treeMNL and hierarchy-correlated
//! corMNL. Every model is linear-in-covariates softmax; they differ in how
//! class coefficients are parameterized and how the hierarchy enters.

mod cormnl;
pub(crate) mod linear;
mod mnl;
mod prior;
mod treemnl;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use cormnl::CorMnlState;
pub use mnl::MnlState;
pub use prior::{gamma_tau_percentiles, GammaPrior, Priors};
pub use treemnl::{route_to_node, TreeMnlState};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::hierarchy::ClassHierarchy;
use linear::{normal_log_prior_grad, softmax_in_place, Design};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mnl,
    TreeMnl,
    CorMnl,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mnl, ModelKind::TreeMnl, ModelKind::CorMnl];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mnl => "MNL",
            ModelKind::TreeMnl => "treeMNL",
            ModelKind::CorMnl => "corMNL",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnl" => Ok(ModelKind::Mnl),
            "treemnl" => Ok(ModelKind::TreeMnl),
            "cormnl" => Ok(ModelKind::CorMnl),
            _ => Err(Error::InvalidConfig(format!(
                "unknown model {s:?}; expected mnl, treemnl or cormnl"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelState {
    Mnl(MnlState),
    TreeMnl(TreeMnlState),
    CorMnl(CorMnlState),
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// `P(y = j | x) ∝ exp(α_j + x·β_j)` with `β` stored `p × c`.
pub fn softmax_probs(alpha: &[f64], beta: ArrayView2<f64>, x: &[f64]) -> Result<Vec<f64>> {
    if beta.ncols() != alpha.len() || beta.nrows() != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "alpha {}, beta {}x{}, x {}",
            alpha.len(),
            beta.nrows(),
            beta.ncols(),
            x.len()
        )));
    }
    check_finite(alpha, "intercepts")?;
    check_finite(x, "covariates")?;
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("coefficients".into()));
    }
    let mut out: Vec<f64> = alpha
        .iter()
        .zip(beta.columns())
        .map(|(a, b)| a + b.iter().zip(x).map(|(b, x)| b * x).sum::<f64>())
        .collect();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Class coefficients implied by a corMNL state: column `j` is the sum of
/// branch vectors on the path to leaf `j`.
pub fn cormnl_effective_beta(s: &CorMnlState, h: &ClassHierarchy) -> Result<Array2<f64>> {
    s.check(h)?;
    let p = s.n_covariates();
    let mut beta = Array2::zeros((p, h.n_classes()));
    for j in 0..h.n_classes() {
        for &b in h.path(j).branches() {
            let mut col = beta.column_mut(j);
            col += &s.phi.row(b);
        }
    }
    Ok(beta)
}

/// Leaf probabilities of a treeMNL: product of node-level choice
/// probabilities along each leaf path.
pub fn treemnl_leaf_probs(s: &TreeMnlState, h: &ClassHierarchy, x: &[f64]) -> Result<Vec<f64>> {
    s.check(h)?;
    let xv = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let probs = tree_probs(s, h, xv)?;
    Ok(probs.into_raw_vec_and_offset().0)
}

fn tree_probs(s: &TreeMnlState, h: &ClassHierarchy, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = x.nrows();
    let node_probs: Vec<Vec<f64>> = s
        .nodes
        .iter()
        .map(|node| {
            if node.n_covariates() != x.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "state has {} covariates, data has {}",
                    node.n_covariates(),
                    x.ncols()
                )));
            }
            Ok(node.design().probs(&node.coefficients(), x))
        })
        .collect::<Result<_>>()?;
    let mut out = Array2::ones((n, h.n_classes()));
    for j in 0..h.n_classes() {
        for &b in h.path(j).branches() {
            let br = h.branch(b);
            let cm = h.n_children(br.parent);
            let np = &node_probs[br.parent];
            for i in 0..n {
                out[[i, j]] *= np[i * cm + br.slot];
            }
        }
    }
    Ok(out)
}

fn to_array(v: Vec<f64>, n: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_vec((n, c), v).expect("probability matrix shape")
}

impl ModelState {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelState::Mnl(_) => ModelKind::Mnl,
            ModelState::TreeMnl(_) => ModelKind::TreeMnl,
            ModelState::CorMnl(_) => ModelKind::CorMnl,
        }
    }

    pub fn n_covariates(&self) -> usize {
        match self {
            ModelState::Mnl(s) => s.n_covariates(),
            ModelState::TreeMnl(s) => s.n_covariates(),
            ModelState::CorMnl(s) => s.n_covariates(),
        }
    }

    /// Validates the state's shapes against the hierarchy.
    pub fn check(&self, h: &ClassHierarchy) -> Result<()> {
        match self {
            ModelState::Mnl(s) => {
                s.check()?;
                if s.n_classes() != h.n_classes() {
                    return Err(Error::DimensionMismatch(format!(
                        "MNL state has {} classes, hierarchy {}",
                        s.n_classes(),
                        h.n_classes()
                    )));
                }
                Ok(())
            }
            ModelState::TreeMnl(s) => s.check(h),
            ModelState::CorMnl(s) => s.check(h),
        }
    }

    fn check_data(&self, h: &ClassHierarchy, x: ArrayView2<f64>) -> Result<()> {
        self.check(h)?;
        if x.ncols() != self.n_covariates() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} covariates, data has {}",
                self.n_covariates(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Predictive class probabilities for each row of `x` (`n × c`).
    pub fn class_probs_batch(&self, h: &ClassHierarchy, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_data(h, x)?;
        let (n, c) = (x.nrows(), h.n_classes());
        Ok(match self {
            ModelState::Mnl(s) => to_array(s.design().probs(&s.coefficients(), x), n, c),
            ModelState::CorMnl(s) => to_array(s.design(h).probs(&s.coefficients(), x), n, c),
            ModelState::TreeMnl(s) => tree_probs(s, h, x)?,
        })
    }

    pub fn class_probs(&self, h: &ClassHierarchy, x: &[f64]) -> Result<Vec<f64>> {
        check_finite(x, "covariates")?;
        let xv = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.class_probs_batch(h, xv)?.into_raw_vec_and_offset().0)
    }

    /// `Σ_i log P(y_i | x_i)`. For treeMNL this is the sum of per-node
    /// likelihoods over the cases routed through each node.
    pub fn log_likelihood(&self, h: &ClassHierarchy, data: &Dataset) -> Result<f64> {
        data.check_classes(h)?;
        self.check_data(h, data.x.view())?;
        let ll = match self {
            ModelState::Mnl(s) => s.design().log_lik(&s.coefficients(), data.x.view(), &data.y),
            ModelState::CorMnl(s) => s.design(h).log_lik(&s.coefficients(), data.x.view(), &data.y),
            ModelState::TreeMnl(s) => s
                .nodes
                .iter()
                .enumerate()
                .map(|(m, node)| {
                    let (x, y) = route_to_node(h, m, data);
                    node.design().log_lik(&node.coefficients(), x.view(), &y)
                })
                .sum(),
        };
        if !ll.is_finite() {
            return Err(Error::NonFinite("log-likelihood".into()));
        }
        Ok(ll)
    }

    /// Location parameters in a fixed order: MNL `[α | β_1..β_c]`, corMNL
    /// `[α | φ_0..φ_B-1]`, treeMNL the node blocks concatenated in node order.
    pub fn coefficients(&self) -> Vec<f64> {
        match self {
            ModelState::Mnl(s) => s.coefficients(),
            ModelState::CorMnl(s) => s.coefficients(),
            ModelState::TreeMnl(s) => s.nodes.iter().flat_map(|n| n.coefficients()).collect(),
        }
    }

    pub fn set_coefficients(&mut self, coef: &[f64]) -> Result<()> {
        if coef.len() != self.coefficients().len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coefficients, got {}",
                self.coefficients().len(),
                coef.len()
            )));
        }
        match self {
            ModelState::Mnl(s) => s.set_coefficients(coef),
            ModelState::CorMnl(s) => s.set_coefficients(coef),
            ModelState::TreeMnl(s) => {
                let mut at = 0;
                for node in &mut s.nodes {
                    let k = node.n_classes() * (1 + node.n_covariates());
                    node.set_coefficients(&coef[at..at + k]);
                    at += k;
                }
            }
        }
        Ok(())
    }

    /// Log posterior density of the location parameters with every scale
    /// hyperparameter held at its current value, and its gradient in the
    /// order of [`ModelState::coefficients`].
    pub fn log_posterior_and_gradient(&self, h: &ClassHierarchy, data: &Dataset) -> Result<(f64, Vec<f64>)> {
        data.check_classes(h)?;
        self.check_data(h, data.x.view())?;
        let single = |design: &Design, coef: &[f64], sd: &[f64], x: ArrayView2<f64>, y: &[usize]| {
            let mut grad = vec![0.0; coef.len()];
            let ll = design.log_lik_grad(coef, x, y, &mut grad);
            let lp = normal_log_prior_grad(coef, sd, Some(&mut grad));
            (ll + lp, grad)
        };
        let (value, grad) = match self {
            ModelState::Mnl(s) => {
                let d = s.design();
                single(&d, &s.coefficients(), &d.prior_sd(&s.hypers()), data.x.view(), &data.y)
            }
            ModelState::CorMnl(s) => {
                let d = s.design(h);
                single(&d, &s.coefficients(), &d.prior_sd(&s.hypers()), data.x.view(), &data.y)
            }
            ModelState::TreeMnl(s) => {
                let mut total = 0.0;
                let mut grad = Vec::new();
                for (m, node) in s.nodes.iter().enumerate() {
                    let (x, y) = route_to_node(h, m, data);
                    let d = node.design();
                    let (v, g) = single(&d, &node.coefficients(), &d.prior_sd(&node.hypers()), x.view(), &y);
                    total += v;
                    grad.extend(g);
                }
                (total, grad)
            }
        };
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("log posterior or gradient".into()));
        }
        Ok((value, grad))
    }

    /// Named scale hyperparameters, for traces.
    pub fn hyperparameters(&self) -> Vec<(String, f64)> {
        fn push_ard(out: &mut Vec<(String, f64)>, prefix: &str, ard: &Option<Vec<f64>>) {
            if let Some(s) = ard {
                out.extend(s.iter().enumerate().map(|(l, v)| (format!("{prefix}sigma{}", l + 1), *v)));
            }
        }
        let mut out = Vec::new();
        match self {
            ModelState::Mnl(s) => {
                out.push(("tau0".into(), s.tau0));
                out.push(("tau".into(), s.tau));
                push_ard(&mut out, "", &s.ard);
            }
            ModelState::CorMnl(s) => {
                out.push(("tau0".into(), s.tau0));
                out.extend(s.tau_node.iter().enumerate().map(|(m, v)| (format!("tau_node{m}"), *v)));
                push_ard(&mut out, "", &s.ard);
            }
            ModelState::TreeMnl(s) => {
                for (m, node) in s.nodes.iter().enumerate() {
                    out.push((format!("node{m}_tau0"), node.tau0));
                    out.push((format!("node{m}_tau"), node.tau));
                    push_ard(&mut out, &format!("node{m}_"), &node.ard);
                }
            }
        }
        out
    }
}

/// Zero location parameters with every scale at its prior median.
pub fn initial_state(kind: ModelKind, h: &ClassHierarchy, p: usize, priors: &Priors) -> ModelState {
    let tau0 = priors.intercept.median_tau();
    let ard = priors.ard.map(|g| vec![g.median_tau(); p]);
    let node_tau = |m: usize| priors.node(h.node(m).depth).median_tau();
    match kind {
        ModelKind::Mnl => ModelState::Mnl(MnlState::zeros(
            h.n_classes(),
            p,
            tau0,
            priors.flat.median_tau(),
            ard,
        )),
        ModelKind::CorMnl => {
            let taus = (0..h.n_nodes()).map(node_tau).collect();
            ModelState::CorMnl(CorMnlState::zeros(h, p, tau0, taus, ard))
        }
        ModelKind::TreeMnl => ModelState::TreeMnl(TreeMnlState {
            nodes: (0..h.n_nodes())
                .map(|m| MnlState::zeros(h.n_children(m), p, tau0, node_tau(m), ard.clone()))
                .collect(),
        }),
    }
}
