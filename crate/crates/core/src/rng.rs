//! Seeded randomness shared by fold splitting, initialization, shuffling,
//! dropout and the hyperparameter sampler.
//!
//! The generator is xoshiro256** seeded through SplitMix64 (the reference
//! `seed_from_u64` construction). Everything built on top of it is spelled
//! out here so that a fold manifest can be reproduced in another language:
//!
//! - `uniform()` is `(next_u64() >> 11) * 2^-53`, a float in `[0, 1)`.
//! - `below(n)` is the high 64 bits of `next_u64() * n` (128-bit product).
//! - `shuffle` is Fisher-Yates running `i` from `len - 1` down to `1`,
//!   swapping `i` with `below(i + 1)`.
//!
//! Test vectors (first three `next_u64` outputs):
//!
//! | seed  | outputs |
//! |-------|---------|
//! | 0     | `0x99ec5f36cb75f2b4`, `0xbf6e1f784956452a`, `0x1a5f849d4933e6e0` |
//! | 20210 | `0x38720367d0cc887a`, `0xd1238632dfcb1c88`, `0xfe781547515c000d` |

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw (Box-Muller, one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Mixes a base seed with a tag into an independent child seed
/// (SplitMix64 finalizer over `base ^ tag * golden`).
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
