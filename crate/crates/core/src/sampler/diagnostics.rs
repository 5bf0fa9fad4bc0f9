//! Split-R̂ and effective sample size.

use serde_json::{json, Map, Value};

use super::SamplerError;

fn check_shape(chains: &[Vec<f64>]) -> Result<usize, SamplerError> {
    let n = chains.first().map_or(0, Vec::len);
    if chains.is_empty() || n < 4 || chains.iter().any(|c| c.len() != n) {
        return Err(SamplerError::InsufficientDraws);
    }
    Ok(n)
}

/// Halves every chain (dropping the middle draw of odd-length chains).
fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let half = c.len() / 2;
            [&c[..half], &c[c.len() - half..]]
        })
        .collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Returns `(W, var⁺)` for the split chains.
fn variance_components(parts: &[&[f64]]) -> (f64, f64) {
    let n = parts[0].len() as f64;
    let w = parts.iter().map(|c| variance(c)).sum::<f64>() / parts.len() as f64;
    let means: Vec<f64> = parts.iter().map(|c| mean(c)).collect();
    let b_over_n = if means.len() > 1 { variance(&means) } else { 0.0 };
    (w, (n - 1.0) / n * w + b_over_n)
}

/// Split potential scale reduction factor, floored at 1 (short chains with
/// near-identical means can otherwise dip to `sqrt((n-1)/n)`). Returns `+∞`
/// when the within-chain variance is zero.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64, SamplerError> {
    check_shape(chains)?;
    let parts = split(chains);
    let (w, var_plus) = variance_components(&parts);
    if !(w > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok((var_plus / w).sqrt().max(1.0))
}

/// Effective sample size from split chains, combining within-chain
/// autocovariances with the between-chain variance and summing paired
/// autocorrelations until the first negative pair. Returns 0 when the
/// within-chain variance is zero.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64, SamplerError> {
    check_shape(chains)?;
    let parts = split(chains);
    let (w, var_plus) = variance_components(&parts);
    if !(w > 0.0) {
        return Ok(0.0);
    }
    let m = parts.len();
    let n = parts[0].len();
    let centered: Vec<Vec<f64>> = parts
        .iter()
        .map(|c| {
            let mu = mean(c);
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    // mean over chains of the biased lag-t autocovariance
    let autocov = |t: usize| -> f64 {
        centered
            .iter()
            .map(|c| c[..n - t].iter().zip(&c[t..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let rho = |t: usize| 1.0 - (w - autocov(t)) / var_plus;

    let mut tau = -1.0;
    let mut previous = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(previous);
        tau += 2.0 * pair;
        previous = pair;
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = tau.max(1.0 / total.log10());
    Ok(total / tau)
}

/// Per-coordinate convergence summary of a multi-chain run.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub names: Vec<String>,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
    /// Post-warmup divergent transitions per chain.
    pub divergences: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    /// Largest R̂ over coordinates (NaN-free: unavailable values are skipped).
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().filter(|r| !r.is_nan()).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.ess.iter().copied().filter(|r| !r.is_nan()).fold(f64::INFINITY, f64::min)
    }

    /// `{<coordinate>: {rhat, ess}, ..., divergences: [...], warnings: [...]}`.
    /// Infinite R̂ is written as `null`.
    pub fn to_json(&self) -> Value {
        let mut map = Map::new();
        for ((name, r), e) in self.names.iter().zip(&self.rhat).zip(&self.ess) {
            map.insert(name.clone(), json!({ "rhat": finite_or_null(*r), "ess": finite_or_null(*e) }));
        }
        map.insert("divergences".into(), json!(self.divergences));
        map.insert("warnings".into(), json!(self.warnings));
        Value::Object(map)
    }
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}
