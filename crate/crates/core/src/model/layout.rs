//! Parameter types and the mapping between constrained parameters and the
//! flat unconstrained vector the sampler moves in.
//!
//! Unconstrained coordinate layout, `I` participants and `J` items:
//!
//! | model   | coordinates                                                                                          |
//! |---------|------------------------------------------------------------------------------------------------------|
//! | linear  | `beta0, beta1, ln σ_e, ln σ_u, ln σ_w, z_u[1..I], z_w[1..J]`                                         |
//! | mixture | `beta, ln δ, logit p_sr, logit p_or, ln σ_e, ln σ_e′, ln σ_u, ln σ_w, z_u[1..I], z_w[1..J]`          |
//!
//! Random effects are non-centred: `u_i = σ_u·z_u[i]`, `w_j = σ_w·z_w[j]`.
//! The constrained (flat) view uses the same positions with each coordinate
//! replaced by its natural-scale value, named by [`Layout::names`].

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelKind};
use crate::math::{log_logistic_pair, logistic, logit};

/// How an unconstrained coordinate maps to its constrained value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Transform {
    Identity,
    /// `exp`
    Log,
    /// logistic
    Logit,
    /// Multiplied by the constrained value of coordinate `scale`.
    Scaled { scale: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub beta0: f64,
    pub beta1: f64,
    pub sigma_e: f64,
    pub sigma_u: f64,
    pub sigma_w: f64,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub beta: f64,
    /// Shift of the failure component, on the log scale.
    pub delta: f64,
    pub p_sr: f64,
    pub p_or: f64,
    pub sigma_e: f64,
    /// Scale of the failure component.
    pub sigma_ep: f64,
    pub sigma_u: f64,
    pub sigma_w: f64,
    pub u: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Linear(LinearParams),
    Mixture(MixtureParams),
}

impl Params {
    pub fn model(&self) -> ModelKind {
        match self {
            Params::Linear(_) => ModelKind::Linear,
            Params::Mixture(_) => ModelKind::Mixture,
        }
    }

    /// Constrained values in [`Layout::names`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        match self {
            Params::Linear(p) => [p.beta0, p.beta1, p.sigma_e, p.sigma_u, p.sigma_w]
                .into_iter()
                .chain(p.u.iter().copied())
                .chain(p.w.iter().copied())
                .collect(),
            Params::Mixture(p) => [
                p.beta, p.delta, p.p_sr, p.p_or, p.sigma_e, p.sigma_ep, p.sigma_u, p.sigma_w,
            ]
            .into_iter()
            .chain(p.u.iter().copied())
            .chain(p.w.iter().copied())
            .collect(),
        }
    }
}

const LINEAR_NAMES: [&str; 5] = ["beta0", "beta1", "sigma_e", "sigma_u", "sigma_w"];
const LINEAR_RAW_NAMES: [&str; 5] = ["beta0", "beta1", "log_sigma_e", "log_sigma_u", "log_sigma_w"];
const MIXTURE_NAMES: [&str; 8] = [
    "beta", "delta", "p_sr", "p_or", "sigma_e", "sigma_ep", "sigma_u", "sigma_w",
];
const MIXTURE_RAW_NAMES: [&str; 8] = [
    "beta",
    "log_delta",
    "logit_p_sr",
    "logit_p_or",
    "log_sigma_e",
    "log_sigma_ep",
    "log_sigma_u",
    "log_sigma_w",
];

/// Coordinate layout of one model for a given number of participants and items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    model: ModelKind,
    n_participants: usize,
    n_items: usize,
}

impl Layout {
    pub fn new(model: ModelKind, n_participants: usize, n_items: usize) -> Self {
        Layout {
            model,
            n_participants,
            n_items,
        }
    }

    pub fn model(&self) -> ModelKind {
        self.model
    }

    pub fn n_participants(&self) -> usize {
        self.n_participants
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of population-level coordinates (everything but `u` and `w`).
    pub fn n_population(&self) -> usize {
        match self.model {
            ModelKind::Linear => LINEAR_NAMES.len(),
            ModelKind::Mixture => MIXTURE_NAMES.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_population() + self.n_participants + self.n_items
    }

    pub fn intercept_index(&self) -> usize {
        0
    }

    pub fn sigma_u_index(&self) -> usize {
        self.n_population() - 2
    }

    pub fn sigma_w_index(&self) -> usize {
        self.n_population() - 1
    }

    pub fn u_offset(&self) -> usize {
        self.n_population()
    }

    pub fn w_offset(&self) -> usize {
        self.n_population() + self.n_participants
    }

    pub fn population_names(&self) -> &'static [&'static str] {
        match self.model {
            ModelKind::Linear => &LINEAR_NAMES,
            ModelKind::Mixture => &MIXTURE_NAMES,
        }
    }

    /// Constrained coordinate names, e.g. `sigma_e`, `u[3]`, `w[12]`.
    pub fn names(&self) -> Vec<String> {
        self.names_with(self.population_names(), "u", "w")
    }

    pub fn unconstrained_names(&self) -> Vec<String> {
        let raw: &[&str] = match self.model {
            ModelKind::Linear => &LINEAR_RAW_NAMES,
            ModelKind::Mixture => &MIXTURE_RAW_NAMES,
        };
        self.names_with(raw, "z_u", "z_w")
    }

    fn names_with(&self, population: &[&str], u: &str, w: &str) -> Vec<String> {
        population
            .iter()
            .map(|s| s.to_string())
            .chain((1..=self.n_participants).map(|i| format!("{u}[{i}]")))
            .chain((1..=self.n_items).map(|j| format!("{w}[{j}]")))
            .collect()
    }

    pub fn transforms(&self) -> Vec<Transform> {
        let mut t = match self.model {
            ModelKind::Linear => vec![
                Transform::Identity,
                Transform::Identity,
                Transform::Log,
                Transform::Log,
                Transform::Log,
            ],
            ModelKind::Mixture => vec![
                Transform::Identity,
                Transform::Log,
                Transform::Logit,
                Transform::Logit,
                Transform::Log,
                Transform::Log,
                Transform::Log,
                Transform::Log,
            ],
        };
        t.extend(std::iter::repeat_n(
            Transform::Scaled {
                scale: self.sigma_u_index(),
            },
            self.n_participants,
        ));
        t.extend(std::iter::repeat_n(
            Transform::Scaled {
                scale: self.sigma_w_index(),
            },
            self.n_items,
        ));
        t
    }

    fn check_dim(&self, len: usize) -> Result<(), ModelError> {
        if len != self.dim() {
            return Err(ModelError::Dimension {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Maps an unconstrained vector to constrained values in [`Layout::names`] order.
    pub fn constrain_flat(&self, theta: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_dim(theta.len())?;
        let transforms = self.transforms();
        let mut out = vec![0.0; theta.len()];
        // scale coordinates precede the scaled ones
        for (c, (t, &v)) in transforms.iter().zip(theta).enumerate() {
            out[c] = match *t {
                Transform::Identity => v,
                Transform::Log => v.exp(),
                Transform::Logit => logistic(v),
                Transform::Scaled { scale } => out[scale] * v,
            };
        }
        Ok(out)
    }

    /// Inverse of [`Layout::constrain_flat`]. Fails on values outside the
    /// support of their transform.
    pub fn unconstrain_flat(&self, values: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_dim(values.len())?;
        let names = self.population_names();
        let transforms = self.transforms();
        let mut out = vec![0.0; values.len()];
        for (c, (t, &v)) in transforms.iter().zip(values).enumerate() {
            let name = names.get(c).copied().unwrap_or("random effect");
            out[c] = match *t {
                Transform::Identity => v,
                Transform::Log => {
                    if !(v > 0.0) {
                        return Err(ModelError::Domain { name, value: v });
                    }
                    v.ln()
                }
                Transform::Logit => {
                    if !(v > 0.0 && v < 1.0) {
                        return Err(ModelError::Domain { name, value: v });
                    }
                    logit(v)
                }
                Transform::Scaled { scale } => v / values[scale],
            };
        }
        Ok(out)
    }

    pub fn constrain(&self, theta: &[f64]) -> Result<Params, ModelError> {
        let flat = self.constrain_flat(theta)?;
        self.params_from_flat(&flat)
    }

    pub fn unconstrain(&self, params: &Params) -> Result<Vec<f64>, ModelError> {
        if params.model() != self.model {
            return Err(ModelError::Dimension {
                expected: self.dim(),
                got: params.to_flat().len(),
            });
        }
        self.unconstrain_flat(&params.to_flat())
    }

    /// Builds typed parameters from constrained values in [`Layout::names`] order.
    pub fn params_from_flat(&self, v: &[f64]) -> Result<Params, ModelError> {
        self.check_dim(v.len())?;
        let u = v[self.u_offset()..self.w_offset()].to_vec();
        let w = v[self.w_offset()..].to_vec();
        Ok(match self.model {
            ModelKind::Linear => Params::Linear(LinearParams {
                beta0: v[0],
                beta1: v[1],
                sigma_e: v[2],
                sigma_u: v[3],
                sigma_w: v[4],
                u,
                w,
            }),
            ModelKind::Mixture => Params::Mixture(MixtureParams {
                beta: v[0],
                delta: v[1],
                p_sr: v[2],
                p_or: v[3],
                sigma_e: v[4],
                sigma_ep: v[5],
                sigma_u: v[6],
                sigma_w: v[7],
                u,
                w,
            }),
        })
    }

    /// `ln |det ∂constrained/∂theta|`.
    pub fn log_jacobian(&self, theta: &[f64]) -> Result<f64, ModelError> {
        self.check_dim(theta.len())?;
        let mut total = 0.0;
        for (t, &v) in self.transforms().iter().zip(theta) {
            total += match *t {
                Transform::Identity => 0.0,
                Transform::Log => v,
                Transform::Logit => {
                    let (lp, l1mp) = log_logistic_pair(v);
                    lp + l1mp
                }
                // ∂u_i/∂z_i = σ_u (triangular, since σ_u does not depend on z)
                Transform::Scaled { scale } => theta[scale],
            };
        }
        Ok(total)
    }
}
