//! Portable seeded randomness.
//!
//! Every stochastic step (parameter init, epoch shuffles, synthetic data)
//! draws from [`SeededRng`]: xoshiro256++ whose 256-bit state is filled from
//! the 64-bit seed by successive splitmix64 outputs. Derived values are
//! defined on the raw `u64` stream so they do not depend on any
//! distribution code that may change between library versions:
//!
//! - `unit_f64`: `(x >> 11) * 2^-53`, uniform on `[0, 1)`.
//! - `below(n)`: rejects the lowest `2^64 mod n` outputs, then `x % n`.
//! - `shuffle`: Fisher–Yates from the back, `j = below(i + 1)`.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

/// One splitmix64 output for state `x`: add the golden gamma, then the
/// standard two-multiply finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Top 53 bits of `x` mapped to `[0, 1)`.
pub fn unit_from_bits(x: u64) -> f64 {
    (x >> 11) as f64 * TWO_POW_NEG_53
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn unit_f64(&mut self) -> f64 {
        unit_from_bits(self.next_u64())
    }

    /// Uniform on `[-bound, bound)`.
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        (2.0 * self.unit_f64() - 1.0) * bound
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let reject = n.wrapping_neg() % n; // 2^64 mod n
        loop {
            let x = self.next_u64();
            if x >= reject {
                return x % n;
            }
        }
    }

    /// Uniform integer in `lo..=hi`.
    pub fn range_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        assert!(lo <= hi);
        lo + self.below((hi - lo) as u64 + 1) as i64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
