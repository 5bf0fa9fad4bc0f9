//! Bayesian hierarchical models of reading times.
//!
//! Two accounts of reading-time data are implemented as generative models: a
//! hierarchical lognormal regression on sum-coded condition, and a
//! two-component hierarchical lognormal mixture whose slow component has a
//! condition-specific mixing probability. Both are fitted with Hamiltonian
//! Monte Carlo ([`sampler`]) and compared by K-fold cross-validated expected
//! log predictive density ([`crossval`]). [`simulate`] generates fake data
//! from either process for parameter-recovery and model-selection checks.

pub mod crossval;
pub mod data;
pub mod math;
pub mod model;
pub mod sampler;
pub mod seeds;
pub mod simulate;

pub use data::{Condition, Dataset, FoldPlan, Trial};
pub use model::{Layout, ModelKind, Posterior};
