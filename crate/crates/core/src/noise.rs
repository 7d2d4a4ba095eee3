//! Counter-based Gaussian noise.
//!
//! Every draw is addressed by `(seed, stream, index)`: the stream is a
//! ChaCha8 stream id (one per particle), and each index consumes exactly
//! four 32-bit words, so the value of a draw never depends on how many
//! threads produced the ones before it. Index 0 seeds the initial state and
//! index `s + 1` drives Euler step `s`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS_PER_DRAW: u128 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseKey {
    seed: u64,
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl NoiseKey {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent key for a labelled sub-experiment (replication, run, ...).
    pub fn derive(&self, label: u64) -> Self {
        Self { seed: mix64(self.seed ^ mix64(label.wrapping_add(0x9e37_79b9_7f4a_7c15))) }
    }

    /// Sequential reader positioned at `index` of `stream`.
    pub fn stream(&self, stream: u64, index: u64) -> NoiseStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(index as u128 * WORDS_PER_DRAW);
        NoiseStream { rng }
    }

    pub fn normal(&self, stream: u64, index: u64) -> f64 {
        self.stream(stream, index).next_normal()
    }

    pub fn uniform(&self, stream: u64, index: u64) -> f64 {
        self.stream(stream, index).next_uniform()
    }
}

#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

#[inline]
fn open_unit(bits: u64) -> f64 {
    // (0, 1]: never zero, so the logarithm below is finite
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

impl NoiseStream {
    /// Standard normal via Box–Muller (cosine branch); consumes one draw.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        let u1 = open_unit(self.rng.next_u64());
        let u2 = open_unit(self.rng.next_u64());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform on `(0, 1]`; consumes one draw.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        let u = open_unit(self.rng.next_u64());
        let _ = self.rng.next_u64();
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_access_matches_sequential_reads() {
        let key = NoiseKey::new(7);
        let mut s = key.stream(3, 0);
        let seq: Vec<f64> = (0..5).map(|_| s.next_normal()).collect();
        for (i, v) in seq.iter().enumerate() {
            assert_eq!(*v, key.normal(3, i as u64));
        }
        let mut s = key.stream(3, 0);
        let _ = s.next_uniform();
        assert_eq!(s.next_normal(), key.normal(3, 1));
    }

    #[test]
    fn streams_and_keys_differ() {
        let key = NoiseKey::new(7);
        assert_ne!(key.normal(0, 0), key.normal(1, 0));
        assert_ne!(key.normal(0, 0), key.derive(1).normal(0, 0));
        assert_ne!(key.derive(1), key.derive(2));
    }

    #[test]
    fn normal_moments() {
        let key = NoiseKey::new(11);
        let n = 200_000;
        let mut s = key.stream(0, 0);
        let xs: Vec<f64> = (0..n).map(|_| s.next_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
    }
}
