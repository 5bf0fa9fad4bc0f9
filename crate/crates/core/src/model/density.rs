//! Pointwise likelihoods, priors and the log posterior with its gradient.

use super::layout::{Layout, LinearParams, MixtureParams};
use super::{ModelError, ModelKind};
use crate::data::{Condition, Dataset, Trial};
use crate::math::{
    cauchy_lpdf, half_cauchy_lpdf, log_add_exp, log_logistic_pair, logistic, lognormal_lpdf_log,
    normal_lpdf, LN_SQRT_2PI,
};

/// Scale of every Cauchy and half-Cauchy prior.
pub const PRIOR_SCALE: f64 = 2.5;

fn finite(value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonFinite { coordinate: None })
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Domain { name, value })
    }
}

fn probability(name: &'static str, value: f64, closed: bool) -> Result<(), ModelError> {
    let ok = if closed {
        (0.0..=1.0).contains(&value)
    } else {
        value > 0.0 && value < 1.0
    };
    if ok {
        Ok(())
    } else {
        Err(ModelError::Domain { name, value })
    }
}

fn effects<'a>(u: &'a [f64], w: &'a [f64], trial: &Trial) -> Result<(f64, f64), ModelError> {
    match (u.get(trial.participant), w.get(trial.item)) {
        (Some(&a), Some(&b)) => Ok((a, b)),
        _ => Err(ModelError::IndexOutOfRange {
            participant: trial.participant,
            item: trial.item,
        }),
    }
}

/// Log density of the hierarchical lognormal model for one trial, with `x`
/// the sum-coded condition.
pub fn linear_pointwise_loglik(params: &LinearParams, trial: &Trial, x: f64) -> Result<f64, ModelError> {
    positive("sigma_e", params.sigma_e)?;
    let (u, w) = effects(&params.u, &params.w, trial)?;
    let mu = params.beta0 + params.beta1 * x + u + w;
    finite(lognormal_lpdf_log(trial.rt_ms.ln(), mu, params.sigma_e))
}

/// `ln[p·LN(y; mu+delta, sigma_ep) + (1−p)·LN(y; mu, sigma_e)]` given `ln y`.
///
/// `p` may be exactly 0 or 1, in which case the single remaining component is
/// returned.
pub fn mixture_lognormal_lpdf(
    log_y: f64,
    mu: f64,
    delta: f64,
    sigma_e: f64,
    sigma_ep: f64,
    p: f64,
) -> Result<f64, ModelError> {
    probability("mixing probability", p, true)?;
    let success = || lognormal_lpdf_log(log_y, mu, sigma_e);
    let failure = || lognormal_lpdf_log(log_y, mu + delta, sigma_ep);
    let value = if p == 0.0 {
        success()
    } else if p == 1.0 {
        failure()
    } else {
        log_add_exp(p.ln() + failure(), (-p).ln_1p() + success())
    };
    finite(value)
}

/// Log density of the two-component mixture model for one trial. The mixing
/// weight is `p_sr` for subject relatives and `p_or` for object relatives.
pub fn mixture_pointwise_loglik(params: &MixtureParams, trial: &Trial) -> Result<f64, ModelError> {
    positive("sigma_e", params.sigma_e)?;
    positive("sigma_ep", params.sigma_ep)?;
    let (u, w) = effects(&params.u, &params.w, trial)?;
    let p = match trial.condition {
        Condition::SubjectRelative => params.p_sr,
        Condition::ObjectRelative => params.p_or,
    };
    let mu = params.beta + u + w;
    mixture_lognormal_lpdf(trial.rt_ms.ln(), mu, params.delta, params.sigma_e, params.sigma_ep, p)
}

pub fn log_prior_linear(params: &LinearParams) -> Result<f64, ModelError> {
    positive("sigma_e", params.sigma_e)?;
    positive("sigma_u", params.sigma_u)?;
    positive("sigma_w", params.sigma_w)?;
    let mut lp = cauchy_lpdf(params.beta0, 0.0, PRIOR_SCALE) + cauchy_lpdf(params.beta1, 0.0, PRIOR_SCALE);
    lp += half_cauchy_lpdf(params.sigma_e, PRIOR_SCALE)
        + half_cauchy_lpdf(params.sigma_u, PRIOR_SCALE)
        + half_cauchy_lpdf(params.sigma_w, PRIOR_SCALE);
    lp += params.u.iter().map(|&u| normal_lpdf(u, 0.0, params.sigma_u)).sum::<f64>();
    lp += params.w.iter().map(|&w| normal_lpdf(w, 0.0, params.sigma_w)).sum::<f64>();
    finite(lp)
}

pub fn log_prior_mixture(params: &MixtureParams) -> Result<f64, ModelError> {
    positive("delta", params.delta)?;
    probability("p_sr", params.p_sr, false)?;
    probability("p_or", params.p_or, false)?;
    positive("sigma_e", params.sigma_e)?;
    positive("sigma_ep", params.sigma_ep)?;
    positive("sigma_u", params.sigma_u)?;
    positive("sigma_w", params.sigma_w)?;
    // Beta(1, 1) on both probabilities contributes zero.
    let mut lp = cauchy_lpdf(params.beta, 0.0, PRIOR_SCALE) + half_cauchy_lpdf(params.delta, PRIOR_SCALE);
    for s in [params.sigma_e, params.sigma_ep, params.sigma_u, params.sigma_w] {
        lp += half_cauchy_lpdf(s, PRIOR_SCALE);
    }
    lp += params.u.iter().map(|&u| normal_lpdf(u, 0.0, params.sigma_u)).sum::<f64>();
    lp += params.w.iter().map(|&w| normal_lpdf(w, 0.0, params.sigma_w)).sum::<f64>();
    finite(lp)
}

pub fn log_posterior(model: ModelKind, theta: &[f64], dataset: &Dataset) -> Result<f64, ModelError> {
    Posterior::new(model, dataset).log_density(theta)
}

pub fn grad_log_posterior(model: ModelKind, theta: &[f64], dataset: &Dataset) -> Result<Vec<f64>, ModelError> {
    let posterior = Posterior::new(model, dataset);
    let mut grad = vec![0.0; theta.len()];
    posterior.log_density_gradient(theta, &mut grad)?;
    Ok(grad)
}

/// Log posterior density of one model on one dataset, over the unconstrained
/// coordinates of [`Layout`]. Includes every normalising constant of the
/// likelihood and priors and the log-Jacobian of each transform.
#[derive(Debug, Clone)]
pub struct Posterior {
    layout: Layout,
    log_rt: Vec<f64>,
    x: Vec<f64>,
    is_sr: Vec<bool>,
    participant: Vec<usize>,
    item: Vec<usize>,
}

impl Posterior {
    pub fn new(model: ModelKind, dataset: &Dataset) -> Self {
        let trials = dataset.trials();
        Posterior {
            layout: Layout::new(model, dataset.n_participants(), dataset.n_items()),
            log_rt: trials.iter().map(|t| t.rt_ms.ln()).collect(),
            x: trials.iter().map(Trial::x).collect(),
            is_sr: trials.iter().map(|t| t.condition == Condition::SubjectRelative).collect(),
            participant: trials.iter().map(|t| t.participant).collect(),
            item: trials.iter().map(|t| t.item).collect(),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn log_density(&self, theta: &[f64]) -> Result<f64, ModelError> {
        let mut grad = vec![0.0; theta.len()];
        self.log_density_gradient(theta, &mut grad)
    }

    /// Log posterior at `theta`; the gradient is written into `grad`.
    pub fn log_density_gradient(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64, ModelError> {
        self.evaluate(theta, grad, true)
    }

    /// Likelihood part only (no priors, no Jacobians).
    pub fn log_likelihood_gradient(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64, ModelError> {
        self.evaluate(theta, grad, false)
    }

    fn evaluate(&self, theta: &[f64], grad: &mut [f64], with_prior: bool) -> Result<f64, ModelError> {
        let dim = self.layout.dim();
        if theta.len() != dim || grad.len() != dim {
            return Err(ModelError::Dimension {
                expected: dim,
                got: theta.len().min(grad.len()),
            });
        }
        grad.fill(0.0);
        let mut value = match self.layout.model() {
            ModelKind::Linear => self.linear_likelihood(theta, grad),
            ModelKind::Mixture => self.mixture_likelihood(theta, grad),
        };
        if with_prior {
            value += self.prior_and_jacobian(theta, grad);
        }
        if !value.is_finite() {
            return Err(ModelError::NonFinite {
                coordinate: theta.iter().position(|v| !v.is_finite()),
            });
        }
        if let Some(c) = grad.iter().position(|g| !g.is_finite()) {
            return Err(ModelError::NonFinite { coordinate: Some(c) });
        }
        Ok(value)
    }

    fn linear_likelihood(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        let (uo, wo) = (l.u_offset(), l.w_offset());
        let (b0, b1, log_se) = (theta[0], theta[1], theta[2]);
        let su = theta[3].exp();
        let sw = theta[4].exp();
        let inv_se = (-log_se).exp();

        let mut ll = 0.0;
        let mut sum_r2 = 0.0;
        for n in 0..self.log_rt.len() {
            let (i, j) = (self.participant[n], self.item[n]);
            let (zu, zw) = (theta[uo + i], theta[wo + j]);
            let mu = b0 + b1 * self.x[n] + su * zu + sw * zw;
            let r = (self.log_rt[n] - mu) * inv_se;
            ll -= self.log_rt[n] + 0.5 * r * r;
            sum_r2 += r * r;
            let d_mu = r * inv_se;
            grad[0] += d_mu;
            grad[1] += d_mu * self.x[n];
            grad[3] += d_mu * su * zu;
            grad[4] += d_mu * sw * zw;
            grad[uo + i] += d_mu * su;
            grad[wo + j] += d_mu * sw;
        }
        let n = self.log_rt.len() as f64;
        ll -= n * (LN_SQRT_2PI + log_se);
        grad[2] += sum_r2 - n;
        ll
    }

    fn mixture_likelihood(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let l = &self.layout;
        let (uo, wo) = (l.u_offset(), l.w_offset());
        let beta = theta[0];
        let delta = theta[1].exp();
        let (log_se, log_sep) = (theta[4], theta[5]);
        let inv_se = (-log_se).exp();
        let inv_sep = (-log_sep).exp();
        let su = theta[6].exp();
        let sw = theta[7].exp();
        // [SR, OR]
        let p = [logistic(theta[2]), logistic(theta[3])];
        let log_w = [log_logistic_pair(theta[2]), log_logistic_pair(theta[3])];

        let mut ll = 0.0;
        let mut g_delta = 0.0;
        let mut g_se = 0.0;
        let mut g_sep = 0.0;
        let mut g_p = [0.0; 2];
        for n in 0..self.log_rt.len() {
            let (i, j) = (self.participant[n], self.item[n]);
            let c = usize::from(!self.is_sr[n]);
            let (zu, zw) = (theta[uo + i], theta[wo + j]);
            let mu = beta + su * zu + sw * zw;
            let y = self.log_rt[n];
            let r0 = (y - mu) * inv_se;
            let r1 = (y - mu - delta) * inv_sep;
            let l0 = log_w[c].1 - log_se - 0.5 * r0 * r0;
            let l1 = log_w[c].0 - log_sep - 0.5 * r1 * r1;
            // log-sum-exp with a single exp; gamma is the failure responsibility
            let (lse, gamma) = if l1 >= l0 {
                let e = (l0 - l1).exp();
                (l1 + e.ln_1p(), 1.0 / (1.0 + e))
            } else if l0 == f64::NEG_INFINITY {
                (f64::NEG_INFINITY, 0.0)
            } else {
                let e = (l1 - l0).exp();
                (l0 + e.ln_1p(), e / (1.0 + e))
            };
            ll += lse - y;
            let d_fail = gamma * r1 * inv_sep;
            let d_mu = (1.0 - gamma) * r0 * inv_se + d_fail;
            grad[0] += d_mu;
            grad[6] += d_mu * su * zu;
            grad[7] += d_mu * sw * zw;
            grad[uo + i] += d_mu * su;
            grad[wo + j] += d_mu * sw;
            g_delta += d_fail;
            g_se += (1.0 - gamma) * (r0 * r0 - 1.0);
            g_sep += gamma * (r1 * r1 - 1.0);
            g_p[c] += gamma - p[c];
        }
        ll -= self.log_rt.len() as f64 * LN_SQRT_2PI;
        grad[1] += g_delta * delta;
        grad[2] += g_p[0];
        grad[3] += g_p[1];
        grad[4] += g_se;
        grad[5] += g_sep;
        ll
    }

    /// Priors expressed on the unconstrained coordinates, Jacobians included.
    /// For the random effects `N(u; 0, σ_u)·σ_u = N(z; 0, 1)`.
    fn prior_and_jacobian(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let s2 = PRIOR_SCALE * PRIOR_SCALE;
        let mut lp = 0.0;
        let mut coefficient = |c: usize, lp: &mut f64| {
            let b = theta[c];
            *lp += cauchy_lpdf(b, 0.0, PRIOR_SCALE);
            grad[c] -= 2.0 * b / (s2 + b * b);
        };
        let (coefficients, log_positive, logits): (&[usize], &[usize], &[usize]) = match self.layout.model() {
            ModelKind::Linear => (&[0, 1], &[2, 3, 4], &[]),
            ModelKind::Mixture => (&[0], &[1, 4, 5, 6, 7], &[2, 3]),
        };
        for &c in coefficients {
            coefficient(c, &mut lp);
        }
        for &c in log_positive {
            let a = theta[c];
            let s = a.exp();
            lp += half_cauchy_lpdf(s, PRIOR_SCALE) + a;
            grad[c] += 1.0 - 2.0 * s * s / (s2 + s * s);
        }
        for &c in logits {
            let (lp_, l1mp) = log_logistic_pair(theta[c]);
            lp += lp_ + l1mp;
            grad[c] += 1.0 - 2.0 * logistic(theta[c]);
        }
        for c in self.layout.u_offset()..self.layout.dim() {
            let z = theta[c];
            lp -= LN_SQRT_2PI + 0.5 * z * z;
            grad[c] -= z;
        }
        lp
    }
}

impl Layout {
    /// Pointwise log likelihood of `trial` under a constrained draw laid out as
    /// [`Layout::names`].
    pub fn pointwise_loglik(&self, draw: &[f64], trial: &Trial) -> Result<f64, ModelError> {
        if draw.len() != self.dim() {
            return Err(ModelError::Dimension {
                expected: self.dim(),
                got: draw.len(),
            });
        }
        if trial.participant >= self.n_participants() || trial.item >= self.n_items() {
            return Err(ModelError::IndexOutOfRange {
                participant: trial.participant,
                item: trial.item,
            });
        }
        let re = draw[self.u_offset() + trial.participant] + draw[self.w_offset() + trial.item];
        let log_y = trial.rt_ms.ln();
        match self.model() {
            ModelKind::Linear => {
                positive("sigma_e", draw[2])?;
                let mu = draw[0] + draw[1] * trial.x() + re;
                finite(lognormal_lpdf_log(log_y, mu, draw[2]))
            }
            ModelKind::Mixture => {
                positive("sigma_e", draw[4])?;
                positive("sigma_ep", draw[5])?;
                let p = match trial.condition {
                    Condition::SubjectRelative => draw[2],
                    Condition::ObjectRelative => draw[3],
                };
                mixture_lognormal_lpdf(log_y, draw[0] + re, draw[1], draw[4], draw[5], p)
            }
        }
    }
}
