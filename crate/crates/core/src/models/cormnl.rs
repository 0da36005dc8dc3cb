use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::linear::{Design, Hypers};
use crate::error::{Error, Result};
use crate::hierarchy::ClassHierarchy;

/// Hierarchy-correlated MNL. Row `b` of `phi` is the coefficient vector on
/// branch `b`; a class's coefficients are the sum of `phi` rows along its
/// leaf path. Branches leaving internal node `m` share the scale `tau_node[m]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorMnlState {
    pub alpha: Vec<f64>,
    pub phi: Array2<f64>,
    pub tau0: f64,
    pub tau_node: Vec<f64>,
    pub ard: Option<Vec<f64>>,
}

impl CorMnlState {
    pub fn zeros(h: &ClassHierarchy, p: usize, tau0: f64, tau_node: Vec<f64>, ard: Option<Vec<f64>>) -> Self {
        CorMnlState {
            alpha: vec![0.0; h.n_classes()],
            phi: Array2::zeros((h.n_branches(), p)),
            tau0,
            tau_node,
            ard,
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.phi.ncols()
    }

    pub(crate) fn design(&self, h: &ClassHierarchy) -> Design {
        Design::branch_sum(h, self.n_covariates())
    }

    pub(crate) fn check(&self, h: &ClassHierarchy) -> Result<()> {
        if self.alpha.len() != h.n_classes()
            || self.phi.nrows() != h.n_branches()
            || self.tau_node.len() != h.n_nodes()
        {
            return Err(Error::DimensionMismatch(format!(
                "corMNL state ({} intercepts, {} branches, {} node scales) does not fit hierarchy ({} classes, {} branches, {} nodes)",
                self.alpha.len(),
                self.phi.nrows(),
                self.tau_node.len(),
                h.n_classes(),
                h.n_branches(),
                h.n_nodes()
            )));
        }
        if let Some(s) = &self.ard {
            if s.len() != self.n_covariates() {
                return Err(Error::DimensionMismatch("ARD scale count".into()));
            }
        }
        Ok(())
    }

    /// `[α | φ_0 | φ_1 | ...]` in branch order.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut v = self.alpha.clone();
        v.extend(self.phi.iter());
        v
    }

    pub fn set_coefficients(&mut self, coef: &[f64]) {
        let c = self.alpha.len();
        self.alpha.copy_from_slice(&coef[..c]);
        self.phi = ArrayView2::from_shape(self.phi.dim(), &coef[c..])
            .expect("coefficient length")
            .to_owned();
    }

    pub(crate) fn hypers(&self) -> Hypers {
        Hypers {
            tau0: self.tau0,
            tau: self.tau_node.clone(),
            sigma: self.ard.clone(),
        }
    }

    pub(crate) fn set_hypers(&mut self, h: Hypers) {
        self.tau0 = h.tau0;
        self.tau_node = h.tau;
        self.ard = h.sigma;
    }
}
