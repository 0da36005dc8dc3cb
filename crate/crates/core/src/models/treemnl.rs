use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mnl::MnlState;
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::hierarchy::ClassHierarchy;

/// Nested MNLs, one per internal node. Node `m` chooses among its
/// `c_m` children; its `tau` is the node scale `τ_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeMnlState {
    pub nodes: Vec<MnlState>,
}

impl TreeMnlState {
    pub(crate) fn check(&self, h: &ClassHierarchy) -> Result<()> {
        if self.nodes.len() != h.n_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "{} node models for {} internal nodes",
                self.nodes.len(),
                h.n_nodes()
            )));
        }
        for (m, node) in self.nodes.iter().enumerate() {
            node.check()?;
            if node.n_classes() != h.n_children(m) {
                return Err(Error::DimensionMismatch(format!(
                    "node {m} model has {} outcomes but {} children",
                    node.n_classes(),
                    h.n_children(m)
                )));
            }
        }
        Ok(())
    }

    pub fn n_covariates(&self) -> usize {
        self.nodes[0].n_covariates()
    }
}

/// The cases whose class lies below node `m`, labelled by the child slot
/// they take at `m`.
pub fn route_to_node(h: &ClassHierarchy, m: usize, data: &Dataset) -> (Array2<f64>, Vec<usize>) {
    let mut rows = Vec::new();
    let mut slots = Vec::new();
    for (i, &yi) in data.y.iter().enumerate() {
        if let Some(slot) = h.route(yi, m) {
            rows.push(i);
            slots.push(slot);
        }
    }
    (data.x.select(ndarray::Axis(0), &rows), slots)
}
