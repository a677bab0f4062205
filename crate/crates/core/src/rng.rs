//! Deterministic, labeled random streams.
//!
//! Every random construction in this crate draws from an [`RngStream`], a
//! ChaCha12 generator keyed by a 64-bit seed and a short label. Equal
//! `(seed, label)` pairs always reproduce the same sequence, and distinct
//! labels derived from one seed give statistically independent streams, so
//! parallel trials never share state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

/// A seeded, labeled random value stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    rng: ChaCha12Rng,
}

impl RngStream {
    /// Opens the stream identified by `(seed, label)`.
    pub fn new(seed: u64, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update([0u8]);
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        RngStream {
            seed,
            label: label.to_owned(),
            rng: ChaCha12Rng::from_seed(key),
        }
    }

    /// Derives an independent child stream under the same seed.
    pub fn substream(&self, sub: &str) -> Self {
        RngStream::new(self.seed, &format!("{}/{}", self.label, sub))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }

    /// Uniform draw from the open interval (0, 1); endpoints never occur.
    pub fn open_unit(&mut self) -> f64 {
        loop {
            // gen::<f64>() is uniform on [0, 1); reject the single bad point.
            let u: f64 = self.rng.gen();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.rng.gen_range(0..n)
    }

    /// Uniform sign, +1 or -1.
    pub fn sign(&mut self) -> f64 {
        if self.rng.gen::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn bernoulli(&mut self, prob: f64) -> bool {
        self.rng.gen::<f64>() < prob
    }

    /// `count` i.i.d. standard normal draws.
    pub fn normal_vec(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.standard_normal()).collect()
    }

    /// Samples `k` distinct indices from `0..n` by rejection.
    pub fn distinct_indices(&mut self, k: usize, n: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut picked = Vec::with_capacity(k);
        while picked.len() < k {
            let cand = self.index(n);
            if !picked.contains(&cand) {
                picked.push(cand);
            }
        }
        picked
    }

    /// Samples `k` distinct indices from `0..n` without replacement.
    ///
    /// Uses a partial Fisher-Yates pass, suitable when `k` is a sizable
    /// fraction of `n` (rejection would thrash there).
    pub fn sample_without_replacement(&mut self, k: usize, n: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// Derives a per-trial seed from a base seed, mixing with splitmix64.
pub fn derive_seed(base: u64, trial: u64) -> u64 {
    let mut z = base ^ trial.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
