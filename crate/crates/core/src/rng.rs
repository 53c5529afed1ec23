//! Seeded, counter-based random numbers.
//!
//! The generator is SplitMix64 used in counter mode: the `k`-th 64-bit word of
//! a stream is `mix(key + (k + 1) * GOLDEN)`, where `key` is derived from the
//! user seed and a stream id. Uniforms take the top 53 bits. Normals come from
//! the cosine branch of Box–Muller, consuming two uniforms per normal, with no
//! cached second value. The algorithm is frozen under [`RNG_ALGORITHM`]; any
//! change to the bit stream must bump that identifier.

use crate::tensor::{Modality, TensorState};

/// Identifier recorded in run manifests.
pub const RNG_ALGORITHM: &str = "splitmix64-counter/box-muller-cos/v1";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Rng64 {
    key: u64,
    counter: u64,
    normals: u64,
}

impl Rng64 {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream `stream` under the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let key = mix(seed ^ mix(stream.wrapping_add(1).wrapping_mul(GOLDEN)));
        Self {
            key,
            counter: 0,
            normals: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        // Lemire's multiply-shift; bias is < n / 2^64 and irrelevant here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.normals += 1;
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Standard normal state of the given shape.
    pub fn normal_state(&mut self, shape: &[usize], modality: Modality) -> TensorState {
        let n = shape.iter().product();
        TensorState::from_parts(self.normal_vec(n), shape.to_vec(), modality)
    }

    /// Number of Gaussian draws made so far.
    pub fn normals_drawn(&self) -> u64 {
        self.normals
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
