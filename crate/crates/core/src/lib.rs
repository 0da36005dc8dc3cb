//! Bayesian multinomial logit classification with class hierarchies.
//!
//! Three models share one toolkit: flat MNL, treeMNL (independent nested
//! MNLs, one per internal node of the hierarchy) and corMNL (a flat MNL whose
//! class coefficients are sums of branch coefficients along each leaf path).
//! All are fitted by MCMC and evaluated by posterior-predictive averaging.

pub mod datagen;
pub mod error;
pub mod eval;
pub mod hierarchy;
pub mod inference;
pub mod models;
pub mod protocols;
pub mod samplers;

pub use error::{Error, Result};
pub use hierarchy::ClassHierarchy;
