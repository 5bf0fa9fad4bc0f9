//! The two competing models of reading times.
//!
//! * [`ModelKind::Linear`]: `ln rt ~ Normal(β0 + β1·x + u_i + w_j, σ_e)`.
//! * [`ModelKind::Mixture`]: with probability `p_c` (per condition) a slow
//!   "failure" component `LogNormal(β + δ + u_i + w_j, σ_e′)`, otherwise a
//!   "success" component `LogNormal(β + u_i + w_j, σ_e)`.
//!
//! Both place varying intercepts `u_i ~ Normal(0, σ_u)` on participants and
//! `w_j ~ Normal(0, σ_w)` on items. Coefficients get Cauchy(0, 2.5) priors,
//! standard deviations and δ half-Cauchy(0, 2.5), mixing probabilities
//! Beta(1, 1).

mod density;
mod layout;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use density::{
    linear_pointwise_loglik, log_posterior, log_prior_linear, log_prior_mixture, grad_log_posterior,
    mixture_lognormal_lpdf, mixture_pointwise_loglik, Posterior, PRIOR_SCALE,
};
pub use layout::{Layout, LinearParams, MixtureParams, Params, Transform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` out of its domain: {value}")]
    Domain { name: &'static str, value: f64 },
    #[error("non-finite log density{}", coordinate.map(|c| format!(" (coordinate {c})")).unwrap_or_default())]
    NonFinite { coordinate: Option<usize> },
    #[error("parameter vector has length {got}, layout expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("trial refers to participant {participant} / item {item} outside the parameter layout")]
    IndexOutOfRange { participant: usize, item: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Mixture,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Mixture => "mixture",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(ModelKind::Linear),
            "mixture" => Ok(ModelKind::Mixture),
            other => Err(format!("unknown model `{other}` (expected linear or mixture)")),
        }
    }
}
