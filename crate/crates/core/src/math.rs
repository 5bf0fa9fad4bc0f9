//! Scalar log-density and log-space helpers shared by the models and the sampler.

use std::f64::consts::PI;

/// `0.5 * ln(2π)`
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(exp(a) + exp(b))` without overflow. Handles `-inf` operands exactly.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln p` and `ln(1 - p)` for `p = logistic(x)`, accurate in both tails.
#[inline]
pub fn log_logistic_pair(x: f64) -> (f64, f64) {
    // ln σ(x) = -softplus(-x), ln(1 - σ(x)) = -softplus(x)
    (-softplus(-x), -softplus(x))
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn normal_lpdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -LN_SQRT_2PI - sigma.ln() - 0.5 * z * z
}

/// Log density of `LogNormal(mu, sigma)` evaluated at `y` given `log_y = ln y`.
#[inline]
pub fn lognormal_lpdf_log(log_y: f64, mu: f64, sigma: f64) -> f64 {
    normal_lpdf(log_y, mu, sigma) - log_y
}

#[inline]
pub fn cauchy_lpdf(x: f64, location: f64, scale: f64) -> f64 {
    let z = (x - location) / scale;
    -(PI * scale).ln() - z.ln_1p_sq()
}

/// Cauchy(0, scale) restricted to `(0, ∞)` and renormalised.
#[inline]
pub fn half_cauchy_lpdf(x: f64, scale: f64) -> f64 {
    let z = x / scale;
    (2.0 / (PI * scale)).ln() - z.ln_1p_sq()
}

trait Ln1pSq {
    fn ln_1p_sq(self) -> f64;
}

impl Ln1pSq for f64 {
    #[inline]
    fn ln_1p_sq(self) -> f64 {
        // ln(1 + z^2), stable for large |z|
        let a = self.abs();
        if a > 1e8 {
            2.0 * a.ln()
        } else {
            (a * a).ln_1p()
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`); zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
