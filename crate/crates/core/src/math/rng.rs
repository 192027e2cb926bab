use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Counter-based generator keyed by a seed and an optional purpose sub-stream.
///
/// ChaCha8 is a block cipher in counter mode, so the stream is fixed by
/// `(seed, stream)` alone and is identical on every platform.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

pub fn seeded_rng(seed: u64) -> RngState {
    RngState::new(seed, 0)
}

impl RngState {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Independent sub-stream for a named purpose ("data", "init", ...).
    pub fn for_purpose(seed: u64, purpose: &str) -> Self {
        Self::new(seed, purpose_key(purpose))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn coin(&mut self) -> bool {
        self.inner.gen::<bool>()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// FNV-1a over the purpose label; stable across builds.
fn purpose_key(purpose: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in purpose.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
