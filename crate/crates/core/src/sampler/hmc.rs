//! Static-trajectory Hamiltonian Monte Carlo with a diagonal metric.

use rand::Rng;
use rand_distr::StandardNormal;

use super::LogDensity;
use crate::model::ModelError;

/// Energy error above which a trajectory is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// A point in parameter space with its log density and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub position: Vec<f64>,
    pub grad: Vec<f64>,
    pub log_density: f64,
}

impl State {
    pub fn new<T: LogDensity + ?Sized>(target: &T, position: Vec<f64>) -> Result<Self, ModelError> {
        let mut grad = vec![0.0; position.len()];
        let log_density = target.log_density_gradient(&position, &mut grad)?;
        if !log_density.is_finite() {
            return Err(ModelError::NonFinite { coordinate: None });
        }
        if let Some(c) = grad.iter().position(|g| !g.is_finite()) {
            return Err(ModelError::NonFinite { coordinate: Some(c) });
        }
        Ok(State {
            position,
            grad,
            log_density,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// `min(1, exp(-ΔH))`, zero for divergent trajectories.
    pub accept_prob: f64,
    pub accepted: bool,
    pub divergent: bool,
    /// `H(end) − H(start)`; infinite when the trajectory left the support.
    pub energy_error: f64,
    pub n_steps: usize,
}

/// HMC kernel holding the inverse metric and scratch buffers.
pub struct Hmc<'a, T: ?Sized> {
    target: &'a T,
    inv_metric: Vec<f64>,
    momentum: Vec<f64>,
    proposal: State,
}

impl<'a, T: LogDensity + ?Sized> Hmc<'a, T> {
    pub fn new(target: &'a T, inv_metric: Vec<f64>) -> Self {
        let dim = inv_metric.len();
        Hmc {
            target,
            inv_metric,
            momentum: vec![0.0; dim],
            proposal: State {
                position: vec![0.0; dim],
                grad: vec![0.0; dim],
                log_density: 0.0,
            },
        }
    }

    pub fn inv_metric(&self) -> &[f64] {
        &self.inv_metric
    }

    pub fn set_inv_metric(&mut self, inv_metric: Vec<f64>) {
        assert_eq!(inv_metric.len(), self.inv_metric.len());
        self.inv_metric = inv_metric;
    }

    pub fn kinetic_energy(&self, momentum: &[f64]) -> f64 {
        0.5 * momentum
            .iter()
            .zip(&self.inv_metric)
            .map(|(p, m)| m * p * p)
            .sum::<f64>()
    }

    /// Draws `p ~ Normal(0, M)` with `M = diag(1 / inv_metric)`.
    pub fn sample_momentum<R: Rng + ?Sized>(&self, rng: &mut R, momentum: &mut [f64]) {
        for (p, m) in momentum.iter_mut().zip(&self.inv_metric) {
            let z: f64 = rng.sample(StandardNormal);
            *p = z / m.sqrt();
        }
    }

    /// Runs `n_steps` leapfrog steps in place. On error the state is left
    /// partially updated.
    pub fn leapfrog(
        &self,
        state: &mut State,
        momentum: &mut [f64],
        step_size: f64,
        n_steps: usize,
    ) -> Result<(), ModelError> {
        let half = 0.5 * step_size;
        for _ in 0..n_steps {
            for (p, g) in momentum.iter_mut().zip(&state.grad) {
                *p += half * g;
            }
            for ((q, p), m) in state.position.iter_mut().zip(momentum.iter()).zip(&self.inv_metric) {
                *q += step_size * m * p;
            }
            state.log_density = self.target.log_density_gradient(&state.position, &mut state.grad)?;
            for (p, g) in momentum.iter_mut().zip(&state.grad) {
                *p += half * g;
            }
        }
        Ok(())
    }

    /// One Metropolis-corrected HMC transition from `state`, replacing it
    /// with the proposal when accepted.
    pub fn transition<R: Rng + ?Sized>(
        &mut self,
        state: &mut State,
        step_size: f64,
        n_steps: usize,
        rng: &mut R,
    ) -> Transition {
        let mut momentum = std::mem::take(&mut self.momentum);
        self.sample_momentum(rng, &mut momentum);
        let h0 = self.kinetic_energy(&momentum) - state.log_density;

        self.proposal.position.copy_from_slice(&state.position);
        self.proposal.grad.copy_from_slice(&state.grad);
        self.proposal.log_density = state.log_density;
        let mut proposal = std::mem::replace(
            &mut self.proposal,
            State {
                position: Vec::new(),
                grad: Vec::new(),
                log_density: 0.0,
            },
        );
        let integrated = self.leapfrog(&mut proposal, &mut momentum, step_size, n_steps);
        let energy_error = match integrated {
            Ok(()) => {
                let h1 = self.kinetic_energy(&momentum) - proposal.log_density;
                if h1.is_finite() {
                    h1 - h0
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        };
        // draw the uniform unconditionally so the random stream does not
        // depend on the outcome
        let u: f64 = rng.random();
        let divergent = !(energy_error <= DIVERGENCE_THRESHOLD);
        let accept_prob = if divergent {
            0.0
        } else {
            (-energy_error).exp().min(1.0)
        };
        let accepted = !divergent && u < accept_prob;
        if accepted {
            std::mem::swap(state, &mut proposal);
        }
        self.proposal = proposal;
        self.momentum = momentum;
        Transition {
            accept_prob,
            accepted,
            divergent,
            energy_error,
            n_steps,
        }
    }

    /// Heuristic initial step size: doubles or halves a single leapfrog step
    /// until its acceptance probability crosses 0.8.
    pub fn find_reasonable_step_size<R: Rng + ?Sized>(
        &mut self,
        state: &State,
        initial: f64,
        rng: &mut R,
    ) -> f64 {
        let mut step = initial;
        let mut momentum = vec![0.0; state.position.len()];
        let log_accept = |hmc: &Self, step: f64, momentum: &mut [f64]| -> f64 {
            let h0 = hmc.kinetic_energy(momentum) - state.log_density;
            let mut trial = state.clone();
            match hmc.leapfrog(&mut trial, momentum, step, 1) {
                Ok(()) => {
                    let h1 = hmc.kinetic_energy(momentum) - trial.log_density;
                    if h1.is_finite() {
                        h0 - h1
                    } else {
                        f64::NEG_INFINITY
                    }
                }
                Err(_) => f64::NEG_INFINITY,
            }
        };
        self.sample_momentum(rng, &mut momentum);
        let start = momentum.clone();
        let first = log_accept(self, step, &mut momentum);
        let direction = if first > 0.8f64.ln() { 1.0 } else { -1.0 };
        for _ in 0..60 {
            momentum.copy_from_slice(&start);
            let a = log_accept(self, step, &mut momentum);
            let crossed = if direction > 0.0 {
                !(a > 0.8f64.ln())
            } else {
                a > 0.8f64.ln()
            };
            if crossed {
                break;
            }
            step *= if direction > 0.0 { 2.0 } else { 0.5 };
            if !(1e-10..=1e3).contains(&step) {
                break;
            }
        }
        step.clamp(1e-10, 1e3)
    }
}
