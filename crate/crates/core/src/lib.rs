//! Optimistic kernel ridge value iteration over an adaptive domain partition.
//!
//! Modules, bottom-up:
//! - [`kernels`]: kernels on `[0, 1]^d` and their eigendecay metadata
//! - [`regression`]: incremental kernel ridge regression
//! - [`partition`]: the adaptive hypercube cover with per-leaf regressors
//! - [`envs`]: finite-grid episodic MDPs with exact dynamic programming
//! - [`agents`]: the partitioned agent, the global-regressor baseline and reference learners
//! - [`theory`]: analytic bound calculators
//! - [`harness`]: configuration, experiments, regret accounting and checks

pub mod agents;
pub mod envs;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod partition;
pub mod regression;
pub mod theory;

pub use error::{Error, Result};
pub use kernels::{EigendecayProfile, KernelFamily, KernelSpec, Point};
pub use partition::CoverTree;
pub use regression::{Prediction, RegressorState};
