//! Fake data from either generative process, parameter-recovery checks and
//! posterior predictive checks.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Condition, DataError, Dataset, Trial};
use crate::math::{quantile_sorted, sample_variance, sorted_copy};
use crate::model::{Layout, ModelError, ModelKind};
use crate::sampler::PosteriorDraws;
use crate::seeds::{self, PPC_STREAM, SIMULATION_STREAM};

/// Random streams of one simulated dataset, offsets from [`SIMULATION_STREAM`].
const EFFECTS_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const COMPONENT_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid true value for {name}: {value}")]
    InvalidTruth { name: &'static str, value: f64 },
    #[error("parameter `{0}` not found in the posterior draws")]
    Alignment(String),
    #[error("credible level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("at least one replicate is required")]
    NoReplicates,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Fully crossed participant × item design with conditions alternating in a
/// Latin-square pattern: participant `i` sees item `j` as a subject relative
/// when `i + j` is even.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub n_participants: usize,
    pub n_items: usize,
    pub seed: u64,
}

impl DesignSpec {
    pub fn new(n_participants: usize, n_items: usize, seed: u64) -> Self {
        DesignSpec {
            n_participants,
            n_items,
            seed,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, Condition)> + '_ {
        (0..self.n_participants).flat_map(move |i| {
            (0..self.n_items).map(move |j| {
                let condition = if (i + j) % 2 == 0 {
                    Condition::SubjectRelative
                } else {
                    Condition::ObjectRelative
                };
                (i, j, condition)
            })
        })
    }

    fn rng(&self, stream: u64) -> seeds::Rng {
        seeds::rng_from_seed(seeds::derive_seed(self.seed, SIMULATION_STREAM + stream))
    }
}

/// Population-level values of the hierarchical lognormal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearTruth {
    pub beta0: f64,
    pub beta1: f64,
    pub sigma_e: f64,
    pub sigma_u: f64,
    pub sigma_w: f64,
}

impl LinearTruth {
    /// Posterior means of the lognormal model on the original relative-clause data.
    pub fn reference() -> Self {
        LinearTruth {
            beta0: 6.06,
            beta1: -0.07,
            sigma_e: 0.52,
            sigma_u: 0.25,
            sigma_w: 0.20,
        }
    }

    pub fn named(&self) -> Vec<(String, f64)> {
        [
            ("beta0", self.beta0),
            ("beta1", self.beta1),
            ("sigma_e", self.sigma_e),
            ("sigma_u", self.sigma_u),
            ("sigma_w", self.sigma_w),
        ]
        .into_iter()
        .map(|(n, v)| (n.to_string(), v))
        .collect()
    }

    fn validate(&self) -> Result<(), SimulateError> {
        check_positive(&[("sigma_e", self.sigma_e), ("sigma_u", self.sigma_u), ("sigma_w", self.sigma_w)])?;
        check_finite(&[("beta0", self.beta0), ("beta1", self.beta1)])
    }
}

impl Default for LinearTruth {
    fn default() -> Self {
        Self::reference()
    }
}

/// Population-level values of the two-component mixture model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureTruth {
    pub beta: f64,
    pub delta: f64,
    pub p_sr: f64,
    pub p_or: f64,
    pub sigma_e: f64,
    pub sigma_ep: f64,
    pub sigma_u: f64,
    pub sigma_w: f64,
}

impl MixtureTruth {
    /// Posterior means of the mixture model on the original relative-clause data.
    pub fn reference() -> Self {
        MixtureTruth {
            beta: 5.85,
            delta: 0.93,
            p_sr: 0.25,
            p_or: 0.21,
            sigma_e: 0.22,
            sigma_ep: 0.64,
            sigma_u: 0.24,
            sigma_w: 0.09,
        }
    }

    pub fn named(&self) -> Vec<(String, f64)> {
        [
            ("beta", self.beta),
            ("delta", self.delta),
            ("p_sr", self.p_sr),
            ("p_or", self.p_or),
            ("sigma_e", self.sigma_e),
            ("sigma_ep", self.sigma_ep),
            ("sigma_u", self.sigma_u),
            ("sigma_w", self.sigma_w),
        ]
        .into_iter()
        .map(|(n, v)| (n.to_string(), v))
        .collect()
    }

    fn validate(&self) -> Result<(), SimulateError> {
        check_positive(&[
            ("delta", self.delta),
            ("sigma_e", self.sigma_e),
            ("sigma_ep", self.sigma_ep),
            ("sigma_u", self.sigma_u),
            ("sigma_w", self.sigma_w),
        ])?;
        check_finite(&[("beta", self.beta)])?;
        for (name, p) in [("p_sr", self.p_sr), ("p_or", self.p_or)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimulateError::InvalidTruth { name, value: p });
            }
        }
        Ok(())
    }
}

impl Default for MixtureTruth {
    fn default() -> Self {
        Self::reference()
    }
}

fn check_positive(values: &[(&'static str, f64)]) -> Result<(), SimulateError> {
    for &(name, value) in values {
        if !(value > 0.0 && value.is_finite()) {
            return Err(SimulateError::InvalidTruth { name, value });
        }
    }
    Ok(())
}

fn check_finite(values: &[(&'static str, f64)]) -> Result<(), SimulateError> {
    for &(name, value) in values {
        if !value.is_finite() {
            return Err(SimulateError::InvalidTruth { name, value });
        }
    }
    Ok(())
}

fn normal(rng: &mut seeds::Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_effects(design: &DesignSpec, sigma_u: f64, sigma_w: f64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = design.rng(EFFECTS_STREAM);
    let u = (0..design.n_participants).map(|_| sigma_u * normal(&mut rng)).collect();
    let w = (0..design.n_items).map(|_| sigma_w * normal(&mut rng)).collect();
    (u, w)
}

/// Simulates the hierarchical lognormal process: fresh `u`, `w` per dataset,
/// then `ln rt = β0 + β1·x + u_i + w_j + σ_e·ε`.
pub fn gen_linear(truth: &LinearTruth, design: &DesignSpec) -> Result<Dataset, SimulateError> {
    truth.validate()?;
    let (u, w) = random_effects(design, truth.sigma_u, truth.sigma_w);
    let mut noise = design.rng(NOISE_STREAM);
    let trials = design
        .cells()
        .map(|(i, j, condition)| {
            let mu = truth.beta0 + truth.beta1 * condition.sum_code() + u[i] + w[j];
            Trial {
                participant: i,
                item: j,
                condition,
                rt_ms: (mu + truth.sigma_e * normal(&mut noise)).exp(),
            }
        })
        .collect();
    Ok(Dataset::new(trials, design.n_participants, design.n_items)?)
}

/// Simulates the mixture process. Uses the same random-effect and noise
/// streams as [`gen_linear`], plus a third stream for component indicators,
/// so with `p_sr = p_or = 0` the output equals `gen_linear` with `β1 = 0`.
pub fn gen_mixture(truth: &MixtureTruth, design: &DesignSpec) -> Result<Dataset, SimulateError> {
    gen_mixture_with_components(truth, design).map(|(d, _)| d)
}

/// [`gen_mixture`] that also returns, per trial, whether the slow failure
/// component generated it.
pub fn gen_mixture_with_components(
    truth: &MixtureTruth,
    design: &DesignSpec,
) -> Result<(Dataset, Vec<bool>), SimulateError> {
    truth.validate()?;
    let (u, w) = random_effects(design, truth.sigma_u, truth.sigma_w);
    let mut noise = design.rng(NOISE_STREAM);
    let mut components = design.rng(COMPONENT_STREAM);
    let mut failures = Vec::new();
    let trials = design
        .cells()
        .map(|(i, j, condition)| {
            let z = normal(&mut noise);
            let p = match condition {
                Condition::SubjectRelative => truth.p_sr,
                Condition::ObjectRelative => truth.p_or,
            };
            let failed = components.random::<f64>() < p;
            failures.push(failed);
            let mu = truth.beta + u[i] + w[j];
            let log_rt = if failed {
                mu + truth.delta + truth.sigma_ep * z
            } else {
                mu + truth.sigma_e * z
            };
            Trial {
                participant: i,
                item: j,
                condition,
                rt_ms: log_rt.exp(),
            }
        })
        .collect();
    Ok((Dataset::new(trials, design.n_participants, design.n_items)?, failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEntry {
    pub name: String,
    pub true_value: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub level: f64,
    pub parameters: Vec<RecoveryEntry>,
    pub coverage_rate: f64,
}

/// Central `level` credible interval of each named parameter from draw
/// quantiles, and whether it contains the true value.
pub fn recovery_check(
    true_values: &[(String, f64)],
    draws: &PosteriorDraws,
    level: f64,
) -> Result<RecoveryReport, SimulateError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(SimulateError::InvalidLevel(level));
    }
    let tail = (1.0 - level) / 2.0;
    let mut parameters = Vec::with_capacity(true_values.len());
    for (name, true_value) in true_values {
        let c = draws
            .index_of(name)
            .ok_or_else(|| SimulateError::Alignment(name.clone()))?;
        let values = draws.coordinate(c);
        let sorted = sorted_copy(&values);
        let lower = quantile_sorted(&sorted, tail);
        let upper = quantile_sorted(&sorted, 1.0 - tail);
        parameters.push(RecoveryEntry {
            name: name.clone(),
            true_value: *true_value,
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lower,
            upper,
            covered: lower <= *true_value && *true_value <= upper,
        });
    }
    let covered = parameters.iter().filter(|p| p.covered).count();
    let coverage_rate = if parameters.is_empty() {
        0.0
    } else {
        covered as f64 / parameters.len() as f64
    };
    Ok(RecoveryReport {
        level,
        parameters,
        coverage_rate,
    })
}

/// Per-condition discrepancy statistics of one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionStats {
    pub median_rt: f64,
    pub sd_log_rt: f64,
    pub q90_rt: f64,
}

impl ConditionStats {
    pub const NAMES: [&'static str; 3] = ["median_rt", "sd_log_rt", "q90_rt"];

    fn values(&self) -> [f64; 3] {
        [self.median_rt, self.sd_log_rt, self.q90_rt]
    }

    fn of(rts: &[f64]) -> Option<Self> {
        if rts.is_empty() {
            return None;
        }
        let sorted = sorted_copy(rts);
        let logs: Vec<f64> = rts.iter().map(|r| r.ln()).collect();
        Some(ConditionStats {
            median_rt: quantile_sorted(&sorted, 0.5),
            sd_log_rt: sample_variance(&logs).sqrt(),
            q90_rt: quantile_sorted(&sorted, 0.9),
        })
    }
}

/// Statistics for `[SR, OR]`; `None` for a condition without trials.
pub fn condition_stats(rts: &[f64], conditions: &[Condition]) -> [Option<ConditionStats>; 2] {
    Condition::ALL.map(|c| {
        let subset: Vec<f64> = rts
            .iter()
            .zip(conditions)
            .filter(|(_, &k)| k == c)
            .map(|(&r, _)| r)
            .collect();
        ConditionStats::of(&subset)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcCheck {
    pub condition: Condition,
    pub statistic: String,
    pub observed: f64,
    pub replicate_lower: f64,
    pub replicate_median: f64,
    pub replicate_upper: f64,
    /// Fraction of replicates whose statistic is at least the observed one.
    pub p_upper: f64,
    /// Observed value outside the central 95% of the replicates.
    pub extreme: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateStats {
    pub replicate: usize,
    pub draw_index: usize,
    pub stats: [Option<ConditionStats>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcSummary {
    pub model: ModelKind,
    pub n_replicates: usize,
    pub checks: Vec<PpcCheck>,
    #[serde(skip)]
    pub replicates: Vec<ReplicateStats>,
}

impl PpcSummary {
    pub fn check(&self, condition: Condition, statistic: &str) -> Option<&PpcCheck> {
        self.checks
            .iter()
            .find(|c| c.condition == condition && c.statistic == statistic)
    }

    /// `replicate,draw,condition,median_rt,sd_log_rt,q90_rt` rows.
    pub fn write_replicates_csv<W: Write>(&self, writer: W) -> Result<(), SimulateError> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "replicate,draw,condition,{}", ConditionStats::NAMES.join(","))?;
        for r in &self.replicates {
            for (c, s) in Condition::ALL.iter().zip(&r.stats) {
                if let Some(s) = s {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        r.replicate + 1,
                        r.draw_index + 1,
                        c.label(),
                        s.median_rt,
                        s.sd_log_rt,
                        s.q90_rt
                    )?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates one reading time for `trial` under a constrained draw.
fn simulate_trial(layout: &Layout, draw: &[f64], trial: &Trial, rng: &mut seeds::Rng) -> f64 {
    let re = draw[layout.u_offset() + trial.participant] + draw[layout.w_offset() + trial.item];
    let z = normal(rng);
    match layout.model() {
        ModelKind::Linear => (draw[0] + draw[1] * trial.x() + re + draw[2] * z).exp(),
        ModelKind::Mixture => {
            let p = match trial.condition {
                Condition::SubjectRelative => draw[2],
                Condition::ObjectRelative => draw[3],
            };
            let failed = rng.random::<f64>() < p;
            let mu = draw[0] + re;
            if failed {
                (mu + draw[1] + draw[5] * z).exp()
            } else {
                (mu + draw[4] * z).exp()
            }
        }
    }
}

/// Posterior predictive check: for `n_replicates` draws spread evenly over
/// the posterior, simulates a replicate of `dataset` (same participants,
/// items and conditions) and compares per-condition median, log-scale SD and
/// 90% quantile with the observed values.
pub fn posterior_predictive(
    draws: &PosteriorDraws,
    layout: &Layout,
    dataset: &Dataset,
    n_replicates: usize,
    seed: u64,
) -> Result<PpcSummary, SimulateError> {
    if n_replicates == 0 {
        return Err(SimulateError::NoReplicates);
    }
    if draws.names() != layout.names().as_slice() {
        return Err(SimulateError::Alignment(format!(
            "draws do not follow the {} layout",
            layout.model()
        )));
    }
    let trials = dataset.trials();
    let conditions: Vec<Condition> = trials.iter().map(|t| t.condition).collect();
    let observed_rt: Vec<f64> = trials.iter().map(|t| t.rt_ms).collect();
    let observed = condition_stats(&observed_rt, &conditions);

    let all: Vec<&[f64]> = draws.draws().collect();
    let base = seeds::derive_seed(seed, PPC_STREAM);
    let replicates: Vec<ReplicateStats> = (0..n_replicates)
        .map(|m| {
            let draw_index = m * all.len() / n_replicates;
            let draw = all[draw_index];
            let mut rng = seeds::rng_from_seed(seeds::derive_seed(base, m as u64));
            let rts: Vec<f64> = trials
                .iter()
                .map(|t| simulate_trial(layout, draw, t, &mut rng))
                .collect();
            ReplicateStats {
                replicate: m,
                draw_index,
                stats: condition_stats(&rts, &conditions),
            }
        })
        .collect();

    let mut checks = Vec::new();
    for (ci, condition) in Condition::ALL.iter().enumerate() {
        let Some(obs) = observed[ci] else { continue };
        for (si, statistic) in ConditionStats::NAMES.iter().enumerate() {
            let values: Vec<f64> = replicates
                .iter()
                .filter_map(|r| r.stats[ci].map(|s| s.values()[si]))
                .collect();
            let sorted = sorted_copy(&values);
            let o = obs.values()[si];
            let lower = quantile_sorted(&sorted, 0.025);
            let upper = quantile_sorted(&sorted, 0.975);
            checks.push(PpcCheck {
                condition: *condition,
                statistic: statistic.to_string(),
                observed: o,
                replicate_lower: lower,
                replicate_median: quantile_sorted(&sorted, 0.5),
                replicate_upper: upper,
                p_upper: values.iter().filter(|&&v| v >= o).count() as f64 / values.len() as f64,
                extreme: o < lower || o > upper,
            });
        }
    }
    Ok(PpcSummary {
        model: layout.model(),
        n_replicates,
        checks,
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latin_square_balance() {
        let d = DesignSpec::new(5, 15, 0);
        for i in 0..5 {
            let sr = d.cells().filter(|&(p, _, c)| p == i && c == Condition::SubjectRelative).count();
            assert!(sr == 7 || sr == 8);
        }
        assert_eq!(d.cells().count(), 75);
    }

    #[test]
    fn vanishing_noise_hits_linear_predictor() {
        let truth = LinearTruth {
            beta0: 6.0,
            beta1: -0.2,
            sigma_e: 1e-6,
            sigma_u: 1e-6,
            sigma_w: 1e-6,
        };
        let d = gen_linear(&truth, &DesignSpec::new(6, 8, 4)).unwrap();
        for t in d.trials() {
            assert!((t.rt_ms.ln() - (6.0 - 0.2 * t.x())).abs() < 1e-4);
        }
    }

    #[test]
    fn generators_are_seeded() {
        let design = DesignSpec::new(4, 6, 9);
        let a = gen_mixture(&MixtureTruth::reference(), &design).unwrap();
        let b = gen_mixture(&MixtureTruth::reference(), &design).unwrap();
        assert_eq!(a, b);
        let c = gen_mixture(&MixtureTruth::reference(), &DesignSpec::new(4, 6, 10)).unwrap();
        assert_ne!(a, c);
        let l = LinearTruth::reference();
        assert_eq!(gen_linear(&l, &design).unwrap(), gen_linear(&l, &design).unwrap());
    }

    #[test]
    fn zero_mixing_is_the_linear_process() {
        let design = DesignSpec::new(7, 9, 21);
        let m = MixtureTruth {
            p_sr: 0.0,
            p_or: 0.0,
            ..MixtureTruth::reference()
        };
        let l = LinearTruth {
            beta0: m.beta,
            beta1: 0.0,
            sigma_e: m.sigma_e,
            sigma_u: m.sigma_u,
            sigma_w: m.sigma_w,
        };
        assert_eq!(gen_mixture(&m, &design).unwrap(), gen_linear(&l, &design).unwrap());
    }

    #[test]
    fn invalid_truth_rejected() {
        let design = DesignSpec::new(2, 2, 0);
        let bad = LinearTruth {
            sigma_e: 0.0,
            ..LinearTruth::reference()
        };
        assert!(matches!(gen_linear(&bad, &design), Err(SimulateError::InvalidTruth { name: "sigma_e", .. })));
        let bad = MixtureTruth {
            p_or: 1.2,
            ..MixtureTruth::reference()
        };
        assert!(matches!(gen_mixture(&bad, &design), Err(SimulateError::InvalidTruth { name: "p_or", .. })));
    }

    fn toy_draws(values: &[f64]) -> PosteriorDraws {
        PosteriorDraws::from_chains(
            vec!["theta".into()],
            vec![values.to_vec()],
            Vec::new(),
            Default::default(),
        )
        .unwrap()
    }

    #[test]
    fn recovery_coverage_flags() {
        let draws = toy_draws(&(0..=100).map(f64::from).collect::<Vec<_>>());
        let at_median = recovery_check(&[("theta".into(), 50.0)], &draws, 0.95).unwrap();
        assert!(at_median.parameters[0].covered);
        assert_eq!(at_median.coverage_rate, 1.0);
        let beyond = recovery_check(&[("theta".into(), 101.0)], &draws, 0.95).unwrap();
        assert!(!beyond.parameters[0].covered);
        assert_eq!(beyond.coverage_rate, 0.0);
        let e = &beyond.parameters[0];
        assert!((e.lower - 2.5).abs() < 1e-12 && (e.upper - 97.5).abs() < 1e-12);
        assert!(matches!(
            recovery_check(&[("delta".into(), 1.0)], &draws, 0.95),
            Err(SimulateError::Alignment(_))
        ));
    }

    #[test]
    fn single_replicate_is_well_formed() {
        let design = DesignSpec::new(3, 4, 2);
        let truth = LinearTruth::reference();
        let data = gen_linear(&truth, &design).unwrap();
        let layout = Layout::new(ModelKind::Linear, 3, 4);
        let mut flat = vec![truth.beta0, truth.beta1, truth.sigma_e, truth.sigma_u, truth.sigma_w];
        flat.extend(std::iter::repeat_n(0.0, 7));
        let draws = PosteriorDraws::from_chains(layout.names(), vec![flat], Vec::new(), Default::default()).unwrap();
        let ppc = posterior_predictive(&draws, &layout, &data, 1, 0).unwrap();
        assert_eq!(ppc.checks.len(), 6);
        for c in &ppc.checks {
            assert_eq!(c.replicate_lower, c.replicate_upper);
            assert!(c.p_upper == 0.0 || c.p_upper == 1.0);
        }
        let mut buf = Vec::new();
        ppc.write_replicates_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        assert!(matches!(
            posterior_predictive(&draws, &layout, &data, 0, 0),
            Err(SimulateError::NoReplicates)
        ));
    }
}
