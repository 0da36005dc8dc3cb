//! MCMC kernels: univariate slice sampling, conjugate Gibbs draws for
//! normal scale hyperparameters, and Hamiltonian Monte Carlo.

mod gibbs;
mod hmc;
mod rng;
mod slice;

pub use gibbs::{gibbs_precision_update, slice_precision_update};
pub use hmc::{hmc_update, leapfrog, HmcConfig, HmcOutcome};
pub use rng::RngStream;
pub use slice::{slice_update, SliceConfig, SliceDraw};
