use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Matrix;

/// Deterministic random stream identified by a 64-bit seed.
///
/// Identical seeds and call sequences give identical streams. `fork` derives
/// an independent child stream that depends only on `(seed, stream)`, never on
/// how far the parent has advanced.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by `stream`.
    pub fn fork(&self, stream: u64) -> SeededRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        let seed = inner.next_u64();
        SeededRng::new(seed)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on `[lo, hi]` (degenerate intervals return `lo`).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            lo
        } else {
            lo + (hi - lo) * self.uniform()
        }
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `n` i.i.d. rows from `N(mean, std^2 I)`.
pub fn gaussian_sample(rng: &mut SeededRng, mean: &[f64], std: f64, n: usize) -> Matrix {
    assert!(std >= 0.0, "gaussian_sample: negative standard deviation");
    let d = mean.len();
    let mut out = Matrix::zeros(n, d);
    for r in 0..n {
        let row = out.row_mut(r);
        for (x, m) in row.iter_mut().zip(mean) {
            *x = if std == 0.0 { *m } else { m + std * rng.normal() };
        }
    }
    out
}
