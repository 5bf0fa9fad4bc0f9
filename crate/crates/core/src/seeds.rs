//! Seed expansion.
//!
//! Every random stream in a run is derived from one master seed. A child seed
//! is `derive_seed(parent, stream)`, a SplitMix64 mix of the parent and the
//! stream index, and child generators are ChaCha8 seeded from it. The streams
//! used by the library are:
//!
//! | consumer                    | derivation                                   |
//! |-----------------------------|----------------------------------------------|
//! | HMC chain `c`               | `derive_seed(fit_seed, c)`                   |
//! | cross-validation fold `k`   | fit seed `derive_seed(cv_seed, 1_000 + k)`,  |
//! |   (`k` counted from 1)      |                                              |
//! | fold assignment attempt `a` | `derive_seed(plan_seed, 2_000 + a)`          |
//! | simulation stream `s`       | `derive_seed(design_seed, 3_000 + s)`        |
//! | recovery replicate `r`      | `derive_seed(master, 4_000 + r)`             |
//! | posterior predictive check  | `derive_seed(ppc_seed, 5_000)`               |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FOLD_STREAM: u64 = 1_000;
pub const FOLD_PLAN_STREAM: u64 = 2_000;
pub const SIMULATION_STREAM: u64 = 3_000;
pub const REPLICATE_STREAM: u64 = 4_000;
pub const PPC_STREAM: u64 = 5_000;

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(stream.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
