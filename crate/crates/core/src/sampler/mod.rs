//! Multi-chain HMC with step-size and diagonal-metric adaptation.
//!
//! Each transition integrates a leapfrog trajectory whose step count is drawn
//! uniformly from `1..=L`, with `L = ceil(trajectory_length / ε)` capped at
//! `max_leapfrog`. Chains run independently (in parallel when threads are
//! available) and are merged by chain index.

pub mod adapt;
pub mod diagnostics;
pub mod hmc;

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::math::{mean, quantile_sorted, sample_variance, sorted_copy};
use crate::model::{Layout, ModelError, ModelKind, Posterior};
use crate::seeds::{self, Rng as ChainRng};
use adapt::{DualAverage, RunningVariance, WarmupSchedule};
pub use diagnostics::{ess, rhat, Diagnostics};
use hmc::{Hmc, State};

const INIT_ATTEMPTS: usize = 100;
const INIT_RADIUS: f64 = 2.0;
const DIVERGENCE_WARNING_RATE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot sample from an empty dataset")]
    EmptyDataset,
    #[error("chain {chain}: no finite log density and gradient after {attempts} initialisation attempts ({last})")]
    Initialization {
        chain: usize,
        attempts: usize,
        last: ModelError,
    },
    #[error("chain {chain}, draw {draw}: non-finite constrained value")]
    NonFiniteDraw { chain: usize, draw: usize },
    #[error("diagnostics need at least one chain of four or more draws, all of equal length")]
    InsufficientDraws,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A differentiable log density over `R^dim`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns the log density at `position` and writes its gradient into `grad`.
    fn log_density_gradient(&self, position: &[f64], grad: &mut [f64]) -> Result<f64, ModelError>;
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        Posterior::dim(self)
    }

    fn log_density_gradient(&self, position: &[f64], grad: &mut [f64]) -> Result<f64, ModelError> {
        Posterior::log_density_gradient(self, position, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_leapfrog: usize,
    /// Upper end of the jittered integration time, in whitened units.
    pub trajectory_length: f64,
    /// Independent starting points tried per chain during early warmup.
    pub n_starts: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 4,
            n_warmup: 1000,
            n_samples: 1000,
            seed: 1,
            target_accept: 0.8,
            max_leapfrog: 1024,
            trajectory_length: 2.0 * std::f64::consts::PI,
            n_starts: 4,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::InvalidConfig(m.to_string()));
        if self.n_chains == 0
            || self.n_warmup == 0
            || self.n_samples == 0
            || self.max_leapfrog == 0
            || self.n_starts == 0
        {
            return bad("chain, warmup, sample, leapfrog and start counts must be at least 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if !(self.trajectory_length > 0.0 && self.trajectory_length.is_finite()) {
            return bad("trajectory_length must be positive");
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SamplerConfig { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chain: usize,
    pub seed: u64,
    pub step_size: f64,
    pub mean_accept_prob: f64,
    pub mean_leapfrog_steps: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
}

/// Retained draws on the constrained scale, `[chain][sample][coordinate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    names: Vec<String>,
    n_chains: usize,
    n_samples: usize,
    values: Vec<f64>,
    chain_stats: Vec<ChainStats>,
    config: SamplerConfig,
}

/// Mean and central 95% interval of one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl PosteriorDraws {
    /// Assembles draws from per-chain row-major blocks of `n_samples × names.len()`.
    pub fn from_chains(
        names: Vec<String>,
        chains: Vec<Vec<f64>>,
        chain_stats: Vec<ChainStats>,
        config: SamplerConfig,
    ) -> Result<Self, SamplerError> {
        let dim = names.len();
        let n_chains = chains.len();
        let n_samples = chains.first().map_or(0, |c| c.len() / dim.max(1));
        for (chain, c) in chains.iter().enumerate() {
            if c.len() != n_samples * dim {
                return Err(SamplerError::InsufficientDraws);
            }
            if let Some(pos) = c.iter().position(|v| !v.is_finite()) {
                return Err(SamplerError::NonFiniteDraw {
                    chain,
                    draw: pos / dim.max(1),
                });
            }
        }
        Ok(PosteriorDraws {
            names,
            n_chains,
            n_samples,
            values: chains.concat(),
            chain_stats,
            config,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Total retained draws `S = n_chains × n_samples`.
    pub fn n_draws(&self) -> usize {
        self.n_chains * self.n_samples
    }

    pub fn chain_stats(&self) -> &[ChainStats] {
        &self.chain_stats
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn draw(&self, chain: usize, sample: usize) -> &[f64] {
        let d = self.dim();
        let start = (chain * self.n_samples + sample) * d;
        &self.values[start..start + d]
    }

    /// All draws, chain by chain.
    pub fn draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim().max(1))
    }

    /// Pooled draws of one coordinate.
    pub fn coordinate(&self, coord: usize) -> Vec<f64> {
        self.draws().map(|d| d[coord]).collect()
    }

    pub fn coordinate_chains(&self, coord: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| (0..self.n_samples).map(|s| self.draw(c, s)[coord]).collect())
            .collect()
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let mut rhats = Vec::with_capacity(self.dim());
        let mut esss = Vec::with_capacity(self.dim());
        for c in 0..self.dim() {
            let chains = self.coordinate_chains(c);
            rhats.push(rhat(&chains).unwrap_or(f64::NAN));
            esss.push(ess(&chains).unwrap_or(f64::NAN));
        }
        let divergences: Vec<usize> = self.chain_stats.iter().map(|s| s.divergences).collect();
        let mut warnings = Vec::new();
        for s in &self.chain_stats {
            let rate = s.divergences as f64 / self.n_samples.max(1) as f64;
            if rate > DIVERGENCE_WARNING_RATE {
                warnings.push(format!(
                    "chain {}: {} of {} transitions diverged",
                    s.chain + 1,
                    s.divergences,
                    self.n_samples
                ));
            }
        }
        Diagnostics {
            names: self.names.clone(),
            rhat: rhats,
            ess: esss,
            divergences,
            warnings,
        }
    }

    /// Mean, sd and 2.5% / 97.5% quantiles (linear interpolation) per coordinate.
    pub fn summary(&self) -> Vec<ParamSummary> {
        (0..self.dim())
            .map(|c| {
                let values = self.coordinate(c);
                let sorted = sorted_copy(&values);
                ParamSummary {
                    name: self.names[c].clone(),
                    mean: mean(&values),
                    sd: sample_variance(&values).sqrt(),
                    lower: quantile_sorted(&sorted, 0.025),
                    upper: quantile_sorted(&sorted, 0.975),
                }
            })
            .collect()
    }

    /// CSV with header `chain,iter,<names...>`; chain and iteration are one-based.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SamplerError> {
        let mut w = std::io::BufWriter::new(writer);
        write!(w, "chain,iter")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for c in 0..self.n_chains {
            for s in 0..self.n_samples {
                write!(w, "{},{}", c + 1, s + 1)?;
                for v in self.draw(c, s) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Output of one chain, unconstrained draws row-major.
#[derive(Debug, Clone)]
struct ChainRun {
    draws: Vec<f64>,
    stats: ChainStats,
}

/// A chain position after the initial step-size-only buffer.
#[derive(Debug, Clone)]
struct Pilot {
    state: State,
    averager: DualAverage,
    step: f64,
    /// Mean log density over the second half of the buffer.
    score: f64,
    divergences: usize,
}

fn steps_limit(config: &SamplerConfig, step: f64) -> usize {
    let l = (config.trajectory_length / step).ceil();
    if l.is_finite() {
        (l as usize).clamp(1, config.max_leapfrog)
    } else {
        config.max_leapfrog
    }
}

/// Length of the initial buffer, during which only the step size adapts.
fn pilot_length(schedule: &WarmupSchedule) -> usize {
    schedule.windows().first().map_or(0, |w| w.0)
}

fn run_pilot<T, I>(
    target: &T,
    init: &I,
    config: &SamplerConfig,
    chain: usize,
    rng: &mut ChainRng,
    length: usize,
) -> Result<Pilot, SamplerError>
where
    T: LogDensity + ?Sized,
    I: Fn(&mut ChainRng) -> Vec<f64> + Sync,
{
    let mut last_error = ModelError::NonFinite { coordinate: None };
    let mut state = None;
    for _ in 0..INIT_ATTEMPTS {
        match State::new(target, init(rng)) {
            Ok(s) => {
                state = Some(s);
                break;
            }
            Err(e) => last_error = e,
        }
    }
    let mut state = state.ok_or(SamplerError::Initialization {
        chain,
        attempts: INIT_ATTEMPTS,
        last: last_error,
    })?;

    let mut kernel = Hmc::new(target, vec![1.0; target.dim()]);
    let mut step = kernel.find_reasonable_step_size(&state, 1.0, rng);
    let mut averager = DualAverage::new(config.target_accept, step);
    let mut divergences = 0;
    let mut score = state.log_density;
    let mut scored = 0usize;
    for it in 0..length {
        let n_steps = rng.random_range(1..=steps_limit(config, step));
        let t = kernel.transition(&mut state, step, n_steps, rng);
        divergences += usize::from(t.divergent);
        averager.advance(t.accept_prob);
        step = averager.step_size();
        if 2 * it >= length {
            scored += 1;
            score += (state.log_density - score) / scored as f64;
        }
    }
    Ok(Pilot {
        state,
        averager,
        step,
        score,
        divergences,
    })
}

/// Best of the chain's `n_starts` pilots.
fn best_pilot<T, I>(target: &T, init: &I, config: &SamplerConfig, chain: usize) -> Result<Pilot, SamplerError>
where
    T: LogDensity + ?Sized,
    I: Fn(&mut ChainRng) -> Vec<f64> + Sync,
{
    let chain_seed = seeds::derive_seed(config.seed, chain as u64);
    let length = pilot_length(&WarmupSchedule::new(config.n_warmup));
    let starts = if length == 0 { 1 } else { config.n_starts };
    let mut best: Option<Pilot> = None;
    for start in 0..starts {
        let mut rng = seeds::rng_from_seed(seeds::derive_seed(chain_seed, start as u64));
        let pilot = run_pilot(target, init, config, chain, &mut rng, length)?;
        // ties and NaN keep the earlier start
        if best.as_ref().is_none_or(|b| pilot.score > b.score) {
            best = Some(pilot);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Log-density gap, relative to the best chain, beyond which a chain is
/// treated as stuck in a minor mode and restarted from the best position.
fn restart_gap(dim: usize) -> f64 {
    (2.0 * (dim as f64).sqrt()).max(10.0)
}

fn run_chain<T>(target: &T, config: &SamplerConfig, chain: usize, pilot: Pilot) -> ChainRun
where
    T: LogDensity + ?Sized,
{
    let dim = target.dim();
    let seed = seeds::derive_seed(config.seed, chain as u64);
    let mut rng = seeds::rng_from_seed(seed);
    let schedule = WarmupSchedule::new(config.n_warmup);
    let Pilot {
        mut state,
        mut averager,
        mut step,
        divergences: mut warmup_divergences,
        ..
    } = pilot;

    let mut kernel = Hmc::new(target, vec![1.0; dim]);
    let mut variance = RunningVariance::new(dim);
    for it in pilot_length(&schedule)..config.n_warmup {
        let n_steps = rng.random_range(1..=steps_limit(config, step));
        let t = kernel.transition(&mut state, step, n_steps, &mut rng);
        warmup_divergences += usize::from(t.divergent);
        averager.advance(t.accept_prob);
        step = averager.step_size();
        if schedule.in_window(it) {
            variance.add(&state.position);
        }
        if schedule.is_window_end(it) {
            kernel.set_inv_metric(variance.regularized());
            variance.reset();
            step = kernel.find_reasonable_step_size(&state, step, &mut rng);
            averager = DualAverage::new(config.target_accept, step);
        }
    }
    step = averager.adapted_step_size();

    let mut draws = Vec::with_capacity(config.n_samples * dim);
    let mut divergences = 0;
    let mut accept_sum = 0.0;
    let mut steps_sum = 0usize;
    let limit = steps_limit(config, step);
    for _ in 0..config.n_samples {
        let n_steps = rng.random_range(1..=limit);
        let t = kernel.transition(&mut state, step, n_steps, &mut rng);
        divergences += usize::from(t.divergent);
        accept_sum += t.accept_prob;
        steps_sum += t.n_steps;
        draws.extend_from_slice(&state.position);
    }
    let n = config.n_samples as f64;
    ChainRun {
        draws,
        stats: ChainStats {
            chain,
            seed,
            step_size: step,
            mean_accept_prob: accept_sum / n,
            mean_leapfrog_steps: steps_sum as f64 / n,
            divergences,
            warmup_divergences,
        },
    }
}

/// Samples an arbitrary target. `init` proposes a starting point from the
/// chain's generator (called again on failure, up to 100 times); `constrain`
/// maps each retained unconstrained draw to the reported scale.
///
/// Warmup begins with `n_starts` independent starts per chain, each run
/// through the initial step-size buffer; a chain continues from its best
/// start, or from the overall best one when its own trails it by more than
/// `max(10, 2·sqrt(dim))` in mean log density. This keeps chains out of
/// minor modes that a single start can fall into.
pub fn sample_target<T, I, C>(
    target: &T,
    names: Vec<String>,
    config: &SamplerConfig,
    init: I,
    constrain: C,
) -> Result<PosteriorDraws, SamplerError>
where
    T: LogDensity + ?Sized,
    I: Fn(&mut ChainRng) -> Vec<f64> + Sync,
    C: Fn(&[f64]) -> Result<Vec<f64>, ModelError> + Sync,
{
    config.validate()?;
    let dim = target.dim();
    let mut pilots: Vec<Pilot> = (0..config.n_chains)
        .into_par_iter()
        .map(|chain| best_pilot(target, &init, config, chain))
        .collect::<Result<_, _>>()?;
    let leader = (0..pilots.len()).fold(0, |b, c| if pilots[c].score > pilots[b].score { c } else { b });
    let floor = pilots[leader].score - restart_gap(dim);
    for c in 0..pilots.len() {
        if !(pilots[c].score >= floor) {
            let divergences = pilots[c].divergences;
            pilots[c] = Pilot {
                divergences,
                ..pilots[leader].clone()
            };
        }
    }
    let runs: Vec<ChainRun> = pilots
        .into_par_iter()
        .enumerate()
        .map(|(chain, pilot)| run_chain(target, config, chain, pilot))
        .collect();
    let mut chains = Vec::with_capacity(runs.len());
    let mut stats = Vec::with_capacity(runs.len());
    for run in runs {
        let mut constrained = Vec::with_capacity(run.draws.len());
        for d in run.draws.chunks_exact(dim.max(1)) {
            constrained.extend(constrain(d)?);
        }
        chains.push(constrained);
        stats.push(run.stats);
    }
    PosteriorDraws::from_chains(names, chains, stats, config.clone())
}

fn jittered_init(layout: &Layout, intercept: f64, rng: &mut ChainRng) -> Vec<f64> {
    let mut theta: Vec<f64> = (0..layout.dim())
        .map(|_| rng.random_range(-INIT_RADIUS..=INIT_RADIUS))
        .collect();
    theta[layout.intercept_index()] = intercept;
    theta
}

/// Starting point: every unconstrained coordinate uniform on `[−2, 2]`,
/// except the intercept, which starts at the mean log reading time.
pub fn init_point(model: ModelKind, dataset: &Dataset, seed: u64) -> Vec<f64> {
    let layout = Layout::new(model, dataset.n_participants(), dataset.n_items());
    let mut rng = seeds::rng_from_seed(seed);
    jittered_init(&layout, dataset.mean_log_rt().unwrap_or(0.0), &mut rng)
}

/// Fits `model` to `dataset`, returning constrained draws.
pub fn sample(model: ModelKind, dataset: &Dataset, config: &SamplerConfig) -> Result<PosteriorDraws, SamplerError> {
    config.validate()?;
    let intercept = dataset.mean_log_rt().ok_or(SamplerError::EmptyDataset)?;
    let posterior = Posterior::new(model, dataset);
    let layout = *posterior.layout();
    sample_target(
        &posterior,
        layout.names(),
        config,
        |rng| jittered_init(&layout, intercept, rng),
        |theta| layout.constrain_flat(theta),
    )
}
