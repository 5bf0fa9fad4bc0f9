#![allow(dead_code)]

use std::str::FromStr;

use dashu_float::round::mode::HalfEven;
use dashu_float::{DBig, FBig};
use rand::Rng;
use rand_distr::StandardNormal;
use rtmix::data::{Condition, Dataset, Trial};
use rtmix::seeds::{rng_from_seed, Rng as SeededRng};

pub type Big = FBig<HalfEven, 2>;

const PRECISION: usize = 256;

pub fn big(x: f64) -> Big {
    Big::try_from(x).expect("finite").with_precision(PRECISION).value()
}

pub fn to_f64(x: &Big) -> f64 {
    x.to_f64().value()
}

/// ln(2π)/2 to 60 digits.
pub fn big_ln_sqrt_2pi() -> Big {
    DBig::from_str("0.918938533204672741780329736405617639861397473637783412817151540")
        .unwrap()
        .with_base_and_precision::<2>(PRECISION)
        .value()
        .with_rounding::<HalfEven>()
}

/// Log density of LogNormal(mu, sigma) at `y`, given `ln y`, in extended precision.
pub fn big_lognormal_lpdf(log_y: f64, mu: f64, sigma: f64) -> Big {
    let z = (big(log_y) - big(mu)) / big(sigma);
    let half = big(0.5);
    -big(log_y) - big(sigma).ln() - big_ln_sqrt_2pi() - half * z.clone() * z
}

/// `ln(p·exp(failure) + (1−p)·exp(success))` by direct summation.
pub fn big_mixture(failure: &Big, success: &Big, p: f64) -> Big {
    let one = big(1.0);
    (big(p) * failure.clone().exp() + (one - big(p)) * success.clone().exp()).ln()
}

/// Relative error with a floor of 1 on the denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn rng(seed: u64) -> SeededRng {
    rng_from_seed(seed)
}

pub fn normal(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Crossed design, conditions alternating, log rt around 6.
pub fn toy_dataset(n_participants: usize, n_items: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let mut trials = Vec::new();
    for i in 0..n_participants {
        for j in 0..n_items {
            let condition = if (i + j) % 2 == 0 {
                Condition::SubjectRelative
            } else {
                Condition::ObjectRelative
            };
            trials.push(Trial {
                participant: i,
                item: j,
                condition,
                rt_ms: (6.0 + 0.5 * normal(&mut r)).exp(),
            });
        }
    }
    Dataset::new(trials, n_participants, n_items).unwrap()
}

/// The first `n` trials of a 5 × 4 toy design.
pub fn small_dataset(n: usize, seed: u64) -> Dataset {
    let full = toy_dataset(5, 4, seed);
    full.subset(&(0..n).collect::<Vec<_>>())
}
