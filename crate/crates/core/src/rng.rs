//! Counter-based splittable random streams.
//!
//! Every stochastic task (circuit generation, parameter pair, shot) derives
//! an independent child stream from the master seed and a path of integer
//! tags. Streams are cheap to fork, platform-stable, and independent of the
//! order in which sibling streams are consumed.

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; mixes all input bits into the output.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic random stream identified by a key; drawing advances an
/// internal counter, while [`RngStream::child`] derives an independent
/// stream from the key alone (unaffected by how much the parent has drawn).
#[derive(Clone, Debug)]
pub struct RngStream {
    key: u64,
    ctr: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed ^ GOLDEN_GAMMA),
            ctr: 0,
        }
    }

    /// Derive the stream for `seed` followed by a path of tags,
    /// e.g. `RngStream::derive(seed, &[CIRCUIT_TAG, idx])`.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        let mut s = Self::new(seed);
        for &tag in path {
            s = s.child(tag);
        }
        s
    }

    /// Independent child stream for `tag`. Children with distinct tags are
    /// independent of each other and of the parent's own draws.
    pub fn child(&self, tag: u64) -> Self {
        Self {
            key: mix64(self.key.wrapping_add(GOLDEN_GAMMA) ^ mix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))),
            ctr: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix64(self.key ^ self.ctr.wrapping_mul(GOLDEN_GAMMA).wrapping_add(GOLDEN_GAMMA));
        self.ctr = self.ctr.wrapping_add(1);
        v
    }

    /// Uniform double in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). Bias is O(n / 2^64), negligible here.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal via Box-Muller (one value per call; the sine twin is
    /// discarded to keep the stream position independent of call pairing).
    pub fn next_normal(&mut self) -> f64 {
        let u = self.next_f64().max(f64::MIN_POSITIVE);
        let v = self.next_f64();
        (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
