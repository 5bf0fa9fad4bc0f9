//! K-fold cross-validated expected log predictive density.
//!
//! Each model is refit on every training set; each held-out trial is scored
//! by the log of its posterior-averaged likelihood,
//! `elpd_i = ln( (1/S) Σ_s p(y_i | θ^s) )`, and the scores are summed.
//! Standard errors use `sqrt(n · Var)` with the unbiased sample variance of
//! the pointwise values (or of pointwise differences, when comparing).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::data::{Dataset, FoldPlan, Trial};
use crate::math::sample_variance;
use crate::model::{Layout, ModelError, ModelKind};
use crate::sampler::{self, PosteriorDraws, SamplerConfig, SamplerError};
use crate::seeds::{self, FOLD_STREAM};

/// R̂ above which a fold fit is reported as unconverged.
pub const RHAT_WARNING: f64 = 1.05;

#[derive(Debug, Error)]
pub enum CrossValError {
    #[error("log-mean-exp of an empty sequence")]
    Empty,
    #[error("posterior draws do not follow the {0} parameter layout")]
    LayoutMismatch(ModelKind),
    #[error("non-finite log likelihood for trial {trial} under draw {draw}")]
    NonFinite { trial: usize, draw: usize },
    #[error("fold plan covers {plan} trials but the dataset has {dataset}")]
    PlanMismatch { plan: usize, dataset: usize },
    #[error("fold order must be a permutation of 0..{0}")]
    InvalidOrder(usize),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<CrossValError>,
    },
    #[error("reports cannot be compared: {0}")]
    Alignment(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `ln( (1/n) Σ exp(v_i) )`, shifted by the maximum so that no term
/// overflows or underflows. Constant input returns that constant exactly.
pub fn log_mean_exp(values: &[f64]) -> Result<f64, CrossValError> {
    let (first, rest) = values.split_first().ok_or(CrossValError::Empty)?;
    let (mut arg_max, mut max) = (0, *first);
    for (i, &v) in rest.iter().enumerate() {
        if v > max || v.is_nan() {
            arg_max = i + 1;
            max = v;
            if v.is_nan() {
                return Ok(f64::NAN);
            }
        }
    }
    if max.is_infinite() {
        return Ok(max);
    }
    // the maximum contributes exactly 1, so add the remainder with ln_1p
    let tail: f64 = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg_max)
        .map(|(_, &v)| (v - max).exp())
        .sum();
    Ok(max + tail.ln_1p() - (values.len() as f64).ln())
}

/// Log posterior-mean likelihood of each held-out trial under `draws`.
///
/// Errors name the position of the trial within `heldout` and the
/// zero-based draw index (chain-major).
pub fn pointwise_elpd(heldout: &[Trial], draws: &PosteriorDraws, layout: &Layout) -> Result<Vec<f64>, CrossValError> {
    if draws.names() != layout.names().as_slice() {
        return Err(CrossValError::LayoutMismatch(layout.model()));
    }
    let all: Vec<&[f64]> = draws.draws().collect();
    let mut per_draw = vec![0.0; all.len()];
    heldout
        .iter()
        .enumerate()
        .map(|(trial_index, trial)| {
            for (draw_index, (slot, draw)) in per_draw.iter_mut().zip(&all).enumerate() {
                let ll = layout.pointwise_loglik(draw, trial)?;
                if !ll.is_finite() {
                    return Err(CrossValError::NonFinite {
                        trial: trial_index,
                        draw: draw_index,
                    });
                }
                *slot = ll;
            }
            log_mean_exp(&per_draw)
        })
        .collect()
}

/// Convergence summary of one fold's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    /// One-based fold number.
    pub fold: usize,
    pub n_heldout: usize,
    pub elpd: f64,
    pub max_rhat: f64,
    pub min_ess: f64,
    pub divergences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElpdReport {
    pub model: ModelKind,
    pub k: usize,
    pub total: f64,
    pub se: f64,
    /// One entry per trial, in dataset order.
    pub pointwise: Vec<f64>,
    pub warnings: Vec<String>,
    pub folds: Vec<FoldSummary>,
    /// Zero-based held-out fold of each trial; empty when unknown.
    #[serde(skip)]
    pub assignment: Vec<usize>,
}

/// `(Σ v, sqrt(n · Var(v)))`, summing left to right.
fn total_and_se(values: &[f64]) -> (f64, f64) {
    let total = values.iter().fold(0.0, |acc, v| acc + v);
    let se = (values.len() as f64 * sample_variance(values)).sqrt();
    (total, se)
}

impl ElpdReport {
    /// Report over precomputed pointwise values, without fold information.
    pub fn from_pointwise(model: ModelKind, pointwise: Vec<f64>) -> Self {
        let (total, se) = total_and_se(&pointwise);
        ElpdReport {
            model,
            k: 0,
            total,
            se,
            pointwise,
            warnings: Vec::new(),
            folds: Vec::new(),
            assignment: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.pointwise.len()
    }

    /// `{model, k, total, se, pointwise, warnings, folds}`.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

struct FoldResult {
    fold: usize,
    heldout: Vec<usize>,
    pointwise: Vec<f64>,
    summary: FoldSummary,
    warnings: Vec<String>,
}

fn fold_config(config: &SamplerConfig, fold: usize) -> SamplerConfig {
    config.with_seed(seeds::derive_seed(config.seed, FOLD_STREAM + (fold as u64 + 1)))
}

fn run_fold(
    model: ModelKind,
    dataset: &Dataset,
    plan: &FoldPlan,
    config: &SamplerConfig,
    fold: usize,
) -> Result<FoldResult, CrossValError> {
    let training = dataset.subset(&plan.training(fold));
    let heldout = plan.heldout(fold);
    let draws = sampler::sample(model, &training, &fold_config(config, fold))?;
    let layout = Layout::new(model, dataset.n_participants(), dataset.n_items());
    let trials: Vec<Trial> = heldout.iter().map(|&i| dataset.trials()[i]).collect();
    let pointwise = pointwise_elpd(&trials, &draws, &layout).map_err(|e| match e {
        CrossValError::NonFinite { trial, draw } => CrossValError::NonFinite {
            trial: heldout[trial],
            draw,
        },
        other => other,
    })?;

    let diagnostics = draws.diagnostics();
    let max_rhat = diagnostics.max_rhat();
    let mut warnings: Vec<String> = diagnostics
        .warnings
        .iter()
        .map(|w| format!("fold {}: {w}", fold + 1))
        .collect();
    if !(max_rhat <= RHAT_WARNING) {
        warnings.push(format!(
            "fold {}: max R-hat {max_rhat:.3} exceeds {RHAT_WARNING}",
            fold + 1
        ));
    }
    let summary = FoldSummary {
        fold: fold + 1,
        n_heldout: heldout.len(),
        elpd: pointwise.iter().sum(),
        max_rhat,
        min_ess: diagnostics.min_ess(),
        divergences: diagnostics.divergences.iter().sum(),
    };
    Ok(FoldResult {
        fold,
        heldout,
        pointwise,
        summary,
        warnings,
    })
}

/// Refits `model` on each training set of `plan` and scores the held-out
/// trials. Fold `k` (one-based) samples with seed
/// `derive_seed(config.seed, 1000 + k)`.
pub fn run_kfold(
    model: ModelKind,
    dataset: &Dataset,
    plan: &FoldPlan,
    config: &SamplerConfig,
) -> Result<ElpdReport, CrossValError> {
    let order: Vec<usize> = (0..plan.k()).collect();
    run_kfold_ordered(model, dataset, plan, config, &order)
}

/// [`run_kfold`] with the folds executed in `order` (a permutation of
/// `0..k`). The report does not depend on the order.
pub fn run_kfold_ordered(
    model: ModelKind,
    dataset: &Dataset,
    plan: &FoldPlan,
    config: &SamplerConfig,
    order: &[usize],
) -> Result<ElpdReport, CrossValError> {
    if plan.n_trials() != dataset.len() {
        return Err(CrossValError::PlanMismatch {
            plan: plan.n_trials(),
            dataset: dataset.len(),
        });
    }
    let k = plan.k();
    let mut seen = vec![false; k];
    if order.len() != k || !order.iter().all(|&f| f < k && !std::mem::replace(&mut seen[f], true)) {
        return Err(CrossValError::InvalidOrder(k));
    }
    config.validate()?;

    let mut results: Vec<FoldResult> = order
        .par_iter()
        .map(|&fold| {
            run_fold(model, dataset, plan, config, fold).map_err(|e| CrossValError::Fold {
                fold: fold + 1,
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;
    results.sort_by_key(|r| r.fold);

    let mut pointwise = vec![f64::NAN; dataset.len()];
    let mut warnings = Vec::new();
    let mut folds = Vec::with_capacity(k);
    for r in results {
        for (&i, &v) in r.heldout.iter().zip(&r.pointwise) {
            pointwise[i] = v;
        }
        warnings.extend(r.warnings);
        folds.push(r.summary);
    }
    let (total, se) = total_and_se(&pointwise);
    Ok(ElpdReport {
        model,
        k,
        total,
        se,
        pointwise,
        warnings,
        folds,
        assignment: plan.assignment().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElpdComparison {
    pub model_a: ModelKind,
    pub model_b: ModelKind,
    /// `elpd_a − elpd_b`.
    pub diff: f64,
    pub se_diff: f64,
    /// Label of the model with the higher elpd, or `"tie"`.
    pub winner: String,
    pub pointwise_diff: Vec<f64>,
}

impl ElpdComparison {
    /// `{model_a, model_b, diff, se_diff, winner, pointwise_diff}`.
    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("comparison serializes")
    }
}

/// Pointwise difference `a − b` with its standard error.
pub fn compare(a: &ElpdReport, b: &ElpdReport) -> Result<ElpdComparison, CrossValError> {
    if a.n() != b.n() {
        return Err(CrossValError::Alignment(format!(
            "{} trials against {}",
            a.n(),
            b.n()
        )));
    }
    if !a.assignment.is_empty() && !b.assignment.is_empty() && a.assignment != b.assignment {
        return Err(CrossValError::Alignment("reports use different fold plans".into()));
    }
    let pointwise_diff: Vec<f64> = a.pointwise.iter().zip(&b.pointwise).map(|(x, y)| x - y).collect();
    let (diff, se_diff) = total_and_se(&pointwise_diff);
    let winner = if diff > 0.0 {
        a.model.label().to_string()
    } else if diff < 0.0 {
        b.model.label().to_string()
    } else {
        "tie".to_string()
    };
    Ok(ElpdComparison {
        model_a: a.model,
        model_b: b.model,
        diff,
        se_diff,
        winner,
        pointwise_diff,
    })
}

fn elpd_cell(value: f64, se: f64) -> String {
    // adding 0.0 turns a rounded -0 into 0
    format!("{:.0} ({:.0})", value.round() + 0.0, se.round() + 0.0)
}

/// Two-column `elpd (SE)` table, one row per report, rounded to integers,
/// plus a difference row when a comparison is given.
pub fn format_table(reports: &[&ElpdReport], comparison: Option<&ElpdComparison>) -> String {
    let mut rows: Vec<(String, String)> = reports
        .iter()
        .map(|r| (r.model.label().to_string(), elpd_cell(r.total, r.se)))
        .collect();
    if let Some(c) = comparison {
        rows.push((
            format!("{} - {}", c.model_a.label(), c.model_b.label()),
            elpd_cell(c.diff, c.se_diff),
        ));
    }
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}  elpd (SE)\n", "model");
    for (m, v) in rows {
        out.push_str(&format!("{m:<width$}  {v}\n"));
    }
    out
}
