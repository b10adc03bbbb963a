//! Deterministic, splittable random number generation.
//!
//! Every source of randomness in this crate is an [`RngStream`]: a
//! counter-based generator keyed by `(seed, stream_id)`. The i-th output is
//! a pure function of the key and the counter, so
//!
//! - two streams built from the same `(seed, stream_id)` produce identical
//!   sequences,
//! - streams with distinct ids are statistically independent, and
//! - streams can be handed to worker threads in any order without changing
//!   any per-stream sequence.
//!
//! Experiments key streams by replicate index and sample index, which makes
//! every simulation in the crate reproducible under any parallel schedule.

use crate::PcrError;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function: a bijective mix of the state word.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child key from a parent key and a tag.
#[inline]
fn derive(key: u64, tag: u64) -> u64 {
    mix(key ^ mix(tag.wrapping_add(GOLDEN)))
}

/// Mix a `(seed, tag)` pair into a fresh seed. Used to hand independent
/// sub-seeds to nested runs (e.g. one PCR run per grid element).
#[inline]
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    derive(mix(seed), tag)
}

/// A counter-based random stream; value-like and freely movable between
/// threads.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: u64,
    counter: u64,
    spare_normal: Option<f64>,
}

impl RngStream {
    /// Stream identified by `(seed, stream_id)`.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream {
            key: derive(mix(seed), stream_id),
            counter: 0,
            spare_normal: None,
        }
    }

    /// A statistically independent stream derived from this one's identity.
    ///
    /// Derivation uses only the key, not the current counter, so substreams
    /// do not depend on how much of the parent has been consumed.
    pub fn substream(&self, id: u64) -> Self {
        RngStream {
            key: derive(self.key, id),
            counter: 0,
            spare_normal: None,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 random mantissa bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`; safe to pass to `ln`.
    #[inline]
    fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, bound)` by rejection (no modulo bias).
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below: bound must be positive");
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % bound;
            }
        }
    }

    /// Standard normal draw (Marsaglia polar method, spare value cached).
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(v) = self.spare_normal.take() {
            return v;
        }
        loop {
            let a = 2.0 * self.next_f64() - 1.0;
            let b = 2.0 * self.next_f64() - 1.0;
            let s = a * a + b * b;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(b * f);
                return a * f;
            }
        }
    }

    /// Normal draw with the given mean and standard deviation.
    pub fn gaussian(&mut self, mean: f64, sd: f64) -> Result<f64, PcrError> {
        if !(sd > 0.0) {
            return Err(PcrError::domain(format!(
                "gaussian: sd must be positive, got {sd}"
            )));
        }
        Ok(mean + sd * self.next_gaussian())
    }

    /// Exponential draw with the given rate (used by tail samplers in tests).
    pub fn next_exponential(&mut self, rate: f64) -> f64 {
        -self.next_f64_open().ln() / rate
    }

    /// Fisher-Yates shuffle of a slice.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Adapter so `rand_distr` samplers (the exact binomial sampler in
/// particular) can draw from an [`RngStream`].
pub struct StreamRngCore<'a>(pub &'a mut RngStream);

impl rand_core::RngCore for StreamRngCore<'_> {
    fn next_u32(&mut self) -> u32 {
        (self.0.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let bytes = self.0.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand_core::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_keys_identical_sequences() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn interleaving_does_not_change_per_stream_sequences() {
        let mut a1 = RngStream::new(9, 1);
        let mut a2 = RngStream::new(9, 2);
        let mut interleaved = Vec::new();
        for _ in 0..50 {
            interleaved.push((a1.next_u64(), a2.next_u64()));
        }
        let mut b1 = RngStream::new(9, 1);
        let seq1: Vec<u64> = (0..50).map(|_| b1.next_u64()).collect();
        let mut b2 = RngStream::new(9, 2);
        let seq2: Vec<u64> = (0..50).map(|_| b2.next_u64()).collect();
        for (i, (x, y)) in interleaved.iter().enumerate() {
            assert_eq!(*x, seq1[i]);
            assert_eq!(*y, seq2[i]);
        }
    }

    #[test]
    fn substream_independent_of_parent_position() {
        let parent = RngStream::new(3, 3);
        let mut advanced = parent.clone();
        for _ in 0..17 {
            advanced.next_u64();
        }
        let mut c1 = parent.substream(5);
        let mut c2 = advanced.substream(5);
        for _ in 0..20 {
            assert_eq!(c1.next_u64(), c2.next_u64());
        }
    }

    #[test]
    fn uniform_range() {
        let mut rng = RngStream::new(1, 0);
        for _ in 0..10_000 {
            let v = rng.next_f64();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = RngStream::new(2, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut below = 0u64;
        for _ in 0..n {
            let v = rng.next_gaussian();
            sum += v;
            sumsq += v * v;
            if v <= 0.0 {
                below += 1;
            }
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 4.0 / 1000.0, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
        let p = below as f64 / n as f64;
        assert!((p - 0.5).abs() < 0.002, "P(X<=0) {p}");
    }

    #[test]
    fn gaussian_sd_must_be_positive() {
        let mut rng = RngStream::new(0, 0);
        assert!(rng.gaussian(0.0, 0.0).is_err());
        assert!(rng.gaussian(0.0, -1.0).is_err());
        assert!(rng.gaussian(3.0, 2.0).is_ok());
    }

    #[test]
    fn gaussian_deterministic() {
        let mut a = RngStream::new(11, 4);
        let first: Vec<f64> = (0..100).map(|_| a.next_gaussian()).collect();
        let mut b = RngStream::new(11, 4);
        let second: Vec<f64> = (0..100).map(|_| b.next_gaussian()).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = RngStream::new(5, 5);
        let mut v: Vec<usize> = (0..100).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }
}
