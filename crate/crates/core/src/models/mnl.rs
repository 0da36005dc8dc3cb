use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::linear::{Design, Hypers};
use crate::error::{Error, Result};

/// Flat multinomial logit: intercepts `alpha` and a `p × c` coefficient
/// matrix whose column `j` belongs to class `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MnlState {
    pub alpha: Vec<f64>,
    pub beta: Array2<f64>,
    pub tau0: f64,
    pub tau: f64,
    /// Per-covariate relevance scales; coefficient sd is `tau * ard[l]`.
    pub ard: Option<Vec<f64>>,
}

impl MnlState {
    pub fn zeros(c: usize, p: usize, tau0: f64, tau: f64, ard: Option<Vec<f64>>) -> Self {
        MnlState {
            alpha: vec![0.0; c],
            beta: Array2::zeros((p, c)),
            tau0,
            tau,
            ard,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.beta.nrows()
    }

    pub(crate) fn design(&self) -> Design {
        Design::flat(self.n_classes(), self.n_covariates())
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.beta.ncols() != self.alpha.len() {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} columns for {} intercepts",
                self.beta.ncols(),
                self.alpha.len()
            )));
        }
        if let Some(s) = &self.ard {
            if s.len() != self.n_covariates() {
                return Err(Error::DimensionMismatch("ARD scale count".into()));
            }
        }
        Ok(())
    }

    /// `[α | β_1 | ... | β_c]`, each `β_j` a length-`p` column.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut v = self.alpha.clone();
        v.extend(self.beta.t().iter());
        v
    }

    pub fn set_coefficients(&mut self, coef: &[f64]) {
        let (p, c) = self.beta.dim();
        self.alpha.copy_from_slice(&coef[..c]);
        self.beta = ArrayView2::from_shape((c, p), &coef[c..])
            .expect("coefficient length")
            .t()
            .as_standard_layout()
            .into_owned();
    }

    pub(crate) fn hypers(&self) -> Hypers {
        Hypers {
            tau0: self.tau0,
            tau: vec![self.tau],
            sigma: self.ard.clone(),
        }
    }

    pub(crate) fn set_hypers(&mut self, h: Hypers) {
        self.tau0 = h.tau0;
        self.tau = h.tau[0];
        self.ard = h.sigma;
    }
}
