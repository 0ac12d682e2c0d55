//! Deterministic seeded randomness.
//!
//! Everything random in this crate flows from one root [`Rng`] seeded by the
//! experiment config. The generator is SplitMix64: a counter-based sequence
//! `state += GAMMA; output = mix(state)` with a fixed 64-bit avalanche mix.
//! It is platform-independent and cheap, and two generators with the same
//! seed produce bit-identical streams forever.
//!
//! Independent child streams are derived by purpose key, never by sharing a
//! stream across purposes. The purpose keys live in [`streams`] and are drawn
//! in this documented order:
//!
//! 1. `DATA` - synthetic dataset generation (centroids, labels, noise, splits)
//! 2. `INIT` - parameter initialization
//! 3. `MISSING` - missing-view simulation
//! 4. `PARTITION` - class partitioning into sessions
//! 5. `BATCH` - minibatch shuffling during training
//! 6. `DCL` - contrastive pattern subsampling
//!
//! Adding a consumer means adding a key here, not reusing an existing stream.

/// Purpose keys for [`Rng::stream`], in the order they are consumed by a run.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const MISSING: u64 = 3;
    pub const PARTITION: u64 = 4;
    pub const BATCH: u64 = 5;
    pub const DCL: u64 = 6;
}

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 generator with purpose-keyed stream splitting.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, state: seed }
    }

    /// Seed this generator was created with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent child stream for `purpose`. The child depends
    /// only on the root seed and the purpose key, not on how much of the
    /// parent stream has been consumed.
    pub fn stream(&self, purpose: u64) -> Rng {
        Rng::new(mix64(self.seed ^ purpose.wrapping_mul(GAMMA)))
    }

    /// Like [`Rng::stream`] with a secondary key, for per-session or
    /// per-epoch streams.
    pub fn substream(&self, purpose: u64, index: u64) -> Rng {
        Rng::new(mix64(
            self.seed ^ purpose.wrapping_mul(GAMMA) ^ mix64(index.wrapping_add(1)),
        ))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let mut u1 = self.next_f64();
        if u1 <= f64::MIN_POSITIVE {
            u1 = f64::MIN_POSITIVE;
        }
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in [0, bound) by widening multiply. `bound` must be
    /// nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// `count` distinct indices drawn from [0, n), in draw order.
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        debug_assert!(count <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_are_independent_of_parent_consumption() {
        let mut a = Rng::new(7);
        let b = Rng::new(7);
        for _ in 0..17 {
            a.next_u64();
        }
        let mut ca = a.stream(streams::INIT);
        let mut cb = b.stream(streams::INIT);
        for _ in 0..100 {
            assert_eq!(ca.next_u64(), cb.next_u64());
        }
    }

    #[test]
    fn distinct_purposes_differ() {
        let root = Rng::new(3);
        let mut x = root.stream(streams::DATA);
        let mut y = root.stream(streams::INIT);
        let same = (0..32).all(|_| x.next_u64() == y.next_u64());
        assert!(!same, "purpose streams must not coincide");
    }

    #[test]
    fn next_f64_in_unit_interval() {
        let mut rng = Rng::new(11);
        for _ in 0..10_000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn normal_moments_are_plausible() {
        let mut rng = Rng::new(5);
        let n = 50_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn below_is_in_range_and_hits_all_values() {
        let mut rng = Rng::new(9);
        let mut seen = [false; 7];
        for _ in 0..1000 {
            let v = rng.below(7) as usize;
            assert!(v < 7);
            seen[v] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn sample_indices_distinct() {
        let mut rng = Rng::new(1);
        let picks = rng.sample_indices(50, 20);
        assert_eq!(picks.len(), 20);
        let mut sorted = picks.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 20);
    }
}
