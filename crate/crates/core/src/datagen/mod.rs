//! Datasets: synthetic generation from model priors, CSV ingestion,
//! standardization and disjoint subsampling.

mod csv;
mod split;
mod synth;

pub use self::csv::{load_csv, write_csv, CsvSchema};
pub use self::split::{standardize, subsample_splits, Splits};
pub use self::synth::{generate_replication, sample_labels, sample_prior_state, Covariates, Replication, SimSpec};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::ClassHierarchy;

/// Per-column affine transform `(x - mean) / sd`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardization {
    pub fn apply_row(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.sd) {
            *v = (*v - m) / s;
        }
    }
}

/// `n × p` covariates plus class indices into `classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub classes: Vec<String>,
    /// Set once the covariates have been standardized.
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<usize>, classes: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&j| j >= classes.len()) {
            return Err(Error::UnknownLabel(format!("class index {bad}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariate matrix".into()));
        }
        Ok(Dataset {
            x: x.as_standard_layout().into_owned(),
            y,
            classes,
            standardization: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.is_some()
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(ndarray::Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Checks that class indices refer to the hierarchy's leaf order.
    pub fn check_classes(&self, h: &ClassHierarchy) -> Result<()> {
        if self.classes.as_slice() != h.labels() {
            let unknown = self
                .classes
                .iter()
                .find(|c| h.class_index(c).is_err())
                .cloned();
            return Err(match unknown {
                Some(l) => Error::UnknownLabel(l),
                None => Error::DimensionMismatch(
                    "dataset class order differs from hierarchy leaf order".into(),
                ),
            });
        }
        Ok(())
    }
}
