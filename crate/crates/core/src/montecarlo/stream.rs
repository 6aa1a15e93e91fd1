//! Counter-based splittable random streams.
//!
//! A [`RandomStream`] is a cheap immutable value: 128 bits of derivation
//! state built by hashing a seed and a path of child indices. Drawing numbers
//! happens through [`StreamRng`], a ChaCha8 generator keyed by the stream
//! state. Because the generator is counter-based and the key depends only on
//! (seed, path), any worker can recreate any stream independently.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// SplitMix64 finalizer: a full-avalanche 64-bit mix.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// An immutable handle on a reproducible random sequence.
///
/// Streams form a tree: `derive(i)` gives the i-th child, and the identity
/// of a stream is exactly the (seed, derivation path) pair that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    hi: u64,
    lo: u64,
}

impl RandomStream {
    /// Root stream for a user-supplied seed.
    pub fn from_seed(seed: u64) -> Self {
        Self {
            hi: mix64(seed ^ 0x6A09_E667_F3BC_C908),
            lo: mix64(seed ^ 0xBB67_AE85_84CA_A73B),
        }
    }

    /// Deterministic child stream; distinct indices give unrelated sequences.
    #[must_use]
    pub fn derive(&self, index: u64) -> Self {
        let h = mix64(index ^ 0x3C6E_F372_FE94_F82B);
        let lo = mix64(self.lo ^ h);
        let hi = mix64(self.hi ^ mix64(h ^ 0xA54F_F53A_5F1D_36F1) ^ lo);
        Self { hi, lo }
    }

    /// Child stream addressed by a two-level path, `derive(a).derive(b)`.
    #[must_use]
    pub fn derive2(&self, a: u64, b: u64) -> Self {
        self.derive(a).derive(b)
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> StreamRng {
        let mut key = [0u8; 32];
        let words = [
            mix64(self.lo),
            mix64(self.hi ^ 0x510E_527F_ADE6_82D1),
            mix64(self.lo ^ 0x9B05_688C_2B3E_6C1F),
            mix64(self.hi.wrapping_add(self.lo)),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        StreamRng(ChaCha8Rng::from_seed(key))
    }
}

/// The drawing end of a [`RandomStream`].
#[derive(Debug, Clone)]
pub struct StreamRng(ChaCha8Rng);

impl StreamRng {
    /// Uniform draw in the open interval (0, 1); never returns 0 or 1, so
    /// logs and Gumbel transforms stay finite.
    #[inline]
    pub fn open01(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard Gumbel draw, `-ln(-ln(U))`.
    #[inline]
    pub fn gumbel(&mut self) -> f64 {
        -(-self.open01().ln()).ln()
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest);
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_derivation_same_sequence() {
        let s = RandomStream::from_seed(42);
        let mut a = s.derive(5).rng();
        let mut b = s.derive(5).rng();
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn sibling_streams_differ() {
        let s = RandomStream::from_seed(42);
        let mut a = s.derive(1).rng();
        let mut b = s.derive(2).rng();
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0, "sibling streams should not collide");
    }

    #[test]
    fn path_identity_not_just_last_index() {
        let s = RandomStream::from_seed(7);
        let a = s.derive(1).derive(2);
        let b = s.derive(2).derive(1);
        assert_ne!(a, b);
    }

    #[test]
    fn open01_strictly_inside_unit_interval() {
        let mut rng = RandomStream::from_seed(3).rng();
        for _ in 0..10_000 {
            let u = rng.open01();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn open01_roughly_uniform() {
        let mut rng = RandomStream::from_seed(11).rng();
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| rng.open01()).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }
}
