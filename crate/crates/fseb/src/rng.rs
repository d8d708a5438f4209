//! Seedable random number generation with named sub-streams.
//!
//! Every stochastic component of the crate (dropout masks, parameter init,
//! context sampling, data shuffles) draws from an [`RngStream`] derived from
//! a single master seed. The same seed therefore produces bit-identical runs
//! within this implementation. Streams are derived by name so that, say, an
//! extra dropout layer does not shift the draws seen by the data shuffler.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// splitmix64 step; used to expand seeds and mix stream names.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix_name(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, folded into the seed through splitmix.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut state = seed ^ h;
    splitmix64(&mut state)
}

fn expand_seed(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut out = [0u8; 32];
    for chunk in out.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    out
}

/// A deterministic stream of randomness backed by ChaCha8.
#[derive(Clone, Debug)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    /// Master stream for a run seed.
    pub fn from_seed(seed: u64) -> Self {
        RngStream {
            inner: ChaCha8Rng::from_seed(expand_seed(seed)),
        }
    }

    /// Derive an independent named sub-stream from a seed without consuming
    /// any state. Used for the crate's fixed stream names: "dropout",
    /// "init", "sampling".
    pub fn named(seed: u64, name: &str) -> Self {
        RngStream::from_seed(mix_name(seed, name))
    }

    /// Split off a child stream, consuming one draw from this one.
    pub fn fork(&mut self) -> Self {
        RngStream::from_seed(self.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift; bias is negligible for the desk-scale n used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform(); // (0, 1]
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// `m` distinct indices drawn uniformly from [0, n), in draw order.
    pub fn sample_without_replacement(&mut self, n: usize, m: usize) -> Vec<usize> {
        debug_assert!(m <= n);
        // Partial Fisher-Yates over a sparse index map.
        let mut map = std::collections::HashMap::new();
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let j = i + self.below(n - i);
            let vj = *map.get(&j).unwrap_or(&j);
            let vi = *map.get(&i).unwrap_or(&i);
            map.insert(j, vi);
            out.push(vj);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = RngStream::from_seed(7);
        let mut b = RngStream::from_seed(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn named_streams_differ() {
        let mut a = RngStream::named(7, "dropout");
        let mut b = RngStream::named(7, "init");
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = RngStream::from_seed(3);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments_roughly_standard() {
        let mut r = RngStream::from_seed(11);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = r.normal();
            s += z;
            s2 += z * z;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn sample_without_replacement_distinct_and_complete() {
        let mut r = RngStream::from_seed(5);
        let idx = r.sample_without_replacement(10, 10);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn sample_without_replacement_distinct_partial() {
        let mut r = RngStream::from_seed(5);
        for _ in 0..100 {
            let idx = r.sample_without_replacement(50, 12);
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 12);
        }
    }
}
