//! Self-contained deterministic random number generation.
//!
//! Simulation output is contractually reproducible: the same seed must give
//! byte-identical trajectories across program versions. To avoid tying that
//! contract to an external crate's stream stability, the generator is local:
//! xoshiro256++ (Blackman & Vigna) seeded through SplitMix64, both with their
//! published fixed constants.
//!
//! Per-run seeds for ensembles are derived from a master seed and a run index
//! with [`derive_run_seed`], a SplitMix64-style avalanche mix. The mix is a
//! bijection of its 64-bit input, so distinct run indices always produce
//! distinct seeds for a fixed master seed.

/// SplitMix64 finalizer: one avalanche round of the mixing function.
#[inline]
fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 step constant (golden-ratio increment).
const SPLITMIX_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Derive the seed for run `run_index` of an ensemble with master seed `master`.
///
/// `mix(master + (run_index + 1) * gamma)` where `mix` is the SplitMix64
/// finalizer and `gamma` its odd golden-ratio constant. Since `gamma` is odd
/// and `mix` is bijective, distinct indices give distinct seeds.
pub fn derive_run_seed(master: u64, run_index: u64) -> u64 {
    splitmix64_mix(master.wrapping_add(SPLITMIX_GAMMA.wrapping_mul(run_index.wrapping_add(1))))
}

/// xoshiro256++ PRNG with SplitMix64 seeding.
#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn from_seed(seed: u64) -> Rng {
        // Expand the seed with SplitMix64, as recommended by the xoshiro authors.
        let mut z = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            z = z.wrapping_add(SPLITMIX_GAMMA);
            *slot = splitmix64_mix(z);
        }
        Rng { s }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0].wrapping_add(s[3]).rotate_left(23).wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe as a logarithm argument.
    #[inline]
    pub fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential variate with the given rate (mean `1/rate`).
    #[inline]
    pub fn exponential(&mut self, rate: f64) -> f64 {
        debug_assert!(rate > 0.0);
        -self.next_f64_open().ln() / rate
    }

    /// Uniform index in `0..n` (Lemire's multiply-shift; `n` is tiny here so
    /// the residual bias of ~n/2^64 is far below statistical resolution).
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }
}
